import itertools

import numpy as np
import pytest

from parakernel.coeffs import CoefficientField
from parakernel import kernel_wholespace as kw


FIELDS = {
    "identity1": CoefficientField.identity(1),
    "identity2": CoefficientField.identity(2),
    "anisotropic": CoefficientField.constant(np.diag([0.5, 2.0]), nu=0.5),
    "switching1": CoefficientField.switching(1, nu=0.5, switches=8),
    "switching2": CoefficientField.switching(2, nu=0.5, switches=8),
}


def _fd_nested(field, alpha, beta, x, y, t, s, h):
    def rec(a, b, xx, yy):
        for i, k in enumerate(a):
            if k > 0:
                a2 = list(a)
                a2[i] -= 1
                ei = np.zeros_like(xx)
                ei[i] = h
                return (rec(a2, b, xx + ei, yy) - rec(a2, b, xx - ei, yy)) / (2 * h)
        for i, k in enumerate(b):
            if k > 0:
                b2 = list(b)
                b2[i] -= 1
                ei = np.zeros_like(yy)
                ei[i] = h
                return (rec(a, b2, xx, yy + ei) - rec(a, b2, xx, yy - ei)) / (2 * h)
        return kw.gamma(field, xx, yy, t, s)

    return rec(list(alpha), list(beta), x, y)


def fd_gamma_deriv(field, alpha, beta, x, y, t, s, h=None):
    """Central finite differences of gamma: the independent derivative oracle.

    Richardson-extrapolated (h, h/2) nested central differences with an
    order-adapted step, balancing truncation against round-off amplification.
    """
    x = np.asarray(x, float)
    y = np.asarray(y, float)
    order = sum(alpha) + sum(beta)
    if h is None:
        h = {1: 1e-4, 2: 1e-3, 3: 4e-3}.get(order, 1e-2)
    coarse = _fd_nested(field, alpha, beta, x, y, t, s, h)
    fine = _fd_nested(field, alpha, beta, x, y, t, s, h / 2)
    return (4.0 * fine - coarse) / 3.0


# -- gamma values ------------------------------------------------------------

def test_gamma_heat_kernel_value():
    # standard 1-D heat kernel at the center
    val = kw.gamma(FIELDS["identity1"], [0.0], [0.0], 1.0, 0.0)
    assert val == pytest.approx((4 * np.pi) ** -0.5, rel=1e-14)


def test_gamma_zero_for_t_not_after_s():
    assert kw.gamma(FIELDS["identity1"], [0.0], [1.0], 1.0, 1.0) == 0.0
    assert kw.gamma(FIELDS["identity1"], [0.0], [1.0], 0.5, 1.0) == 0.0


def test_gamma_constant_two_displaced():
    # oracle cross-check for this value lives in test_solver (delta propagation);
    # here freeze the closed-form evaluation
    val = kw.gamma(CoefficientField.constant([[2.0]]), [2.0], [0.0], 1.0, 0.0)
    assert val == pytest.approx((8 * np.pi) ** -0.5 * np.exp(-0.5), rel=1e-14)


def test_gamma_symmetry_exact():
    f = FIELDS["switching2"]
    rng = np.random.default_rng(3)
    for _ in range(20):
        x = rng.normal(size=2)
        y = rng.normal(size=2)
        assert kw.gamma(f, x, y, 1.3, 0.2) == kw.gamma(f, y, x, 1.3, 0.2)


# -- derivatives --------------------------------------------------------------

def test_gamma_deriv_first_order_frozen():
    # oracle (fd_gamma_deriv, h=1e-4) gives -0.10984782213...; frozen value below
    val = kw.gamma_deriv(FIELDS["identity1"], (1,), (0,), [1.0], [0.0], 1.0, 0.0)
    assert val == pytest.approx(-0.1098478223669306, rel=1e-12)
    fd = fd_gamma_deriv(FIELDS["identity1"], (1,), (0,), [1.0], [0.0], 1.0, 0.0)
    assert val == pytest.approx(fd, rel=1e-6)


def test_gamma_deriv_y_sign_flip():
    va = kw.gamma_deriv(FIELDS["identity1"], (1,), (0,), [1.0], [0.0], 1.0, 0.0)
    vb = kw.gamma_deriv(FIELDS["identity1"], (0,), (1,), [1.0], [0.0], 1.0, 0.0)
    assert vb == pytest.approx(-va, rel=1e-14)


def test_gamma_deriv_zero_order_is_gamma():
    f = FIELDS["anisotropic"]
    x, y = np.array([0.4, -0.2]), np.array([0.0, 0.3])
    assert kw.gamma_deriv(f, (0, 0), (0, 0), x, y, 0.9, 0.1) == pytest.approx(
        kw.gamma(f, x, y, 0.9, 0.1), rel=1e-14)


@pytest.mark.parametrize("name", ["identity1", "switching1"])
def test_gamma_deriv_matches_fd_1d(name):
    f = FIELDS[name]
    pairs = [((a,), (b,)) for a in range(4) for b in range(4) if 0 < a + b <= 3]
    for alpha, beta in pairs:
        val = kw.gamma_deriv(f, alpha, beta, [0.7], [0.1], 1.3, 0.4)
        fd = fd_gamma_deriv(f, alpha, beta, [0.7], [0.1], 1.3, 0.4)
        assert val == pytest.approx(fd, rel=1e-6, abs=1e-10), (alpha, beta)


def test_gamma_deriv_matches_fd_2d():
    f = FIELDS["switching2"]
    x, y = np.array([0.5, -0.3]), np.array([0.1, 0.2])
    combos = []
    for total in (1, 2, 3):
        for a1, a2, b1, b2 in itertools.product(range(total + 1), repeat=4):
            if a1 + a2 + b1 + b2 == total:
                combos.append(((a1, a2), (b1, b2)))
    for alpha, beta in combos:
        val = kw.gamma_deriv(f, alpha, beta, x, y, 1.1, 0.3)
        fd = fd_gamma_deriv(f, alpha, beta, x, y, 1.1, 0.3)
        assert val == pytest.approx(fd, rel=2e-6, abs=1e-9), (alpha, beta)


def test_gamma_deriv_order_cap():
    with pytest.raises(kw.CapabilityError):
        kw.gamma_deriv(FIELDS["identity1"], (3,), (2,), [0.5], [0.0], 1.0, 0.0)


# -- time derivatives ----------------------------------------------------------

def test_gamma_dt_frozen_and_fd():
    f = FIELDS["identity1"]
    val = kw.gamma_dt(f, [0.0], [0.0], 1.0, 0.0)
    assert val == pytest.approx(-0.5 * (4 * np.pi) ** -0.5, rel=1e-12)
    h = 1e-5
    fd = (kw.gamma(f, [0.0], [0.0], 1.0 + h, 0.0) - kw.gamma(f, [0.0], [0.0], 1.0 - h, 0.0)) / (2 * h)
    assert val == pytest.approx(fd, rel=1e-6)


def test_gamma_ds_constant_field_is_minus_dt():
    f = FIELDS["anisotropic"]
    x, y = np.array([0.3, 0.6]), np.array([0.0, 0.0])
    assert kw.gamma_ds(f, x, y, 1.0, 0.2) == pytest.approx(
        -kw.gamma_dt(f, x, y, 1.0, 0.2), rel=1e-13)


def test_gamma_ds_fd_oracle_switching():
    f = FIELDS["switching1"]
    # stay inside one slot so the one-sided convention does not matter
    s, t = 0.30, 1.42
    val = kw.gamma_ds(f, [0.6], [0.1], t, s)
    h = 1e-6
    fd = (kw.gamma(f, [0.6], [0.1], t, s + h) - kw.gamma(f, [0.6], [0.1], t, s - h)) / (2 * h)
    assert val == pytest.approx(fd, rel=1e-5)


def test_gamma_ds_gaussian_tail():
    # exp(-r^2/4) tail: below 1e-15 once r^2/(t-s) exceeds ~160
    f = FIELDS["identity1"]
    assert abs(kw.gamma_ds(f, [13.0], [0.0], 1.0, 0.0)) < 1e-15


def test_pde_residual_off_breakpoints():
    # finite difference in t vs the closed-form a^{ij} D_i D_j contraction
    f = FIELDS["switching2"]
    x, y = np.array([0.4, 0.1]), np.array([0.0, -0.2])
    s, t = 0.05, 1.60  # t inside a slot interior
    h = 1e-6
    dt_fd = (kw.gamma(f, x, y, t + h, s) - kw.gamma(f, x, y, t - h, s)) / (2 * h)
    scale = abs(kw.gamma(f, x, y, t, s))
    assert abs(dt_fd - kw.gamma_dt(f, x, y, t, s)) <= 1e-8 * max(scale, 1.0) + 1e-7 * abs(dt_fd)


# -- quadrature invariants ------------------------------------------------------

@pytest.mark.parametrize("name,x", [
    ("identity1", [0.3]),
    ("switching2", [0.3, -0.1]),
    ("anisotropic", [0.0, 0.4]),
])
def test_normalization(name, x):
    assert kw.normalization_defect(FIELDS[name], x, 1.2, 0.1) <= 1e-8


def test_normalization_n3():
    f = CoefficientField.switching(3, nu=0.5, switches=8)
    assert kw.normalization_defect(f, [0.2, 0.0, -0.3], 1.0, 0.0) <= 1e-8


def test_chapman_kolmogorov():
    for name, x, y in [("identity1", [0.0], [0.7]),
                       ("switching2", [0.1, 0.3], [-0.4, 0.0])]:
        defect, ref = kw.chapman_kolmogorov_defect(FIELDS[name], x, y, 1.0, 0.45, 0.0)
        assert defect <= 1e-6
        assert ref > 0


# -- bound fitting ---------------------------------------------------------------

def test_bound_fit_exact_heat_rate():
    fit = kw.bound_fit_whole(FIELDS["identity1"], (0,), (0,), sigma=0.25)
    assert fit.bound_holds
    assert fit.constant == pytest.approx((4 * np.pi) ** -0.5, rel=1e-6)


def test_bound_fit_detects_failure_past_rate():
    fit = kw.bound_fit_whole(FIELDS["identity1"], (0,), (0,), sigma=0.5)
    assert not fit.bound_holds


def test_bound_fit_monotone_in_sigma():
    f = FIELDS["switching1"]
    fits = [kw.bound_fit_whole(f, (1,), (1,), sigma=s) for s in (0.03, 0.05, 0.0625)]
    logs = [fit.log_constant for fit in fits]
    assert logs == sorted(logs)


def test_bound_fit_stable_under_density_doubling():
    f = FIELDS["switching1"]
    spec = kw.SampleSpec()
    fit = kw.bound_fit_whole(f, (2,), (0,), sigma=f.nu / 8, spec=spec)
    fit2 = kw.bound_fit_whole(f, (2,), (0,), sigma=f.nu / 8, spec=spec.doubled())
    assert fit.bound_holds and fit2.bound_holds
    assert abs(fit2.log_constant - fit.log_constant) <= np.log(1.10)


def test_bound_fit_time_derivative_exponent():
    fit = kw.bound_fit_whole(FIELDS["identity2"], (0, 0), (0, 0), sigma=0.125,
                             time_derivative=True)
    assert fit.exponent == pytest.approx((2 + 0) / 2 + 1)
    assert fit.bound_holds
