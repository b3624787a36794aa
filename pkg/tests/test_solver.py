import numpy as np
import pytest

from parakernel.coeffs import CoefficientField
from parakernel import solver as sv
from parakernel import _fd
from parakernel.mixed_norms import NormSpec, norm


IDENTITY1 = CoefficientField.identity(1)
IDENTITY2 = CoefficientField.identity(2)
SWITCH1 = CoefficientField.switching(1, nu=0.5, switches=8)
SWITCH2 = CoefficientField.switching(2, nu=0.5, switches=8)


def box_request(field, forcing, cells=16, nt=16, t1=0.5):
    n = field.dimension
    return sv.SolveRequest("box", field, forcing, (0.0,) * n, (1.0,) * n,
                           (cells,) * n, t1=t1, nt=nt)


# -- basic solve behavior -------------------------------------------------------

def test_zero_forcing_zero_solution():
    u = sv.solve(box_request(IDENTITY1, None, cells=8, nt=8))
    assert np.max(np.abs(u.values)) == 0.0


def test_linearity_in_forcing():
    f1 = sv.gaussian_bump_forcing([0.4], 0.1, 0.0, 0.4)
    f2 = sv.gaussian_bump_forcing([0.6], 0.08, 0.1, 0.5)

    def combo(meshes, t):
        return 2.0 * f1(meshes, t) - 0.5 * f2(meshes, t)

    u1 = sv.solve(box_request(IDENTITY1, f1))
    u2 = sv.solve(box_request(IDENTITY1, f2))
    uc = sv.solve(box_request(IDENTITY1, combo))
    assert np.allclose(uc.values, 2.0 * u1.values - 0.5 * u2.values, atol=1e-13)


def test_maximum_principle():
    def negative(meshes, t):
        return -sv.gaussian_bump_forcing([0.5] * 2, 0.15, 0.0, 0.4)(meshes, t)

    u = sv.solve(box_request(SWITCH2, negative, cells=12, nt=12))
    assert np.max(u.values) <= 1e-12


def test_manufactured_solution_linear_time_exact_orders():
    # u* = t sin(pi x) sin(pi y): implicit Euler is exact for linear-in-t data
    def forcing(meshes, t):
        prod = np.sin(np.pi * meshes[0]) * np.sin(np.pi * meshes[1])
        return prod * (1.0 + t * 2.0 * np.pi ** 2)

    errs = []
    for lvl in range(3):
        req = box_request(IDENTITY2, forcing, cells=8 * 2 ** lvl, nt=8 * 2 ** lvl)
        u = sv.solve(req)
        xs = u.axis_coords(0)
        ts = u.times()
        exact = (ts[None, None, :] * np.sin(np.pi * xs)[:, None, None]
                 * np.sin(np.pi * xs)[None, :, None])
        errs.append(np.max(np.abs(u.values - exact)))
    orders = [np.log2(errs[k] / errs[k + 1]) for k in range(2)]
    assert min(orders) >= 1.9  # pure h^2 once the time error vanishes


def test_manufactured_solution_time_order():
    # u* = t^2 sin(pi x): first order in dt at fixed fine h
    def forcing(meshes, t):
        return np.sin(np.pi * meshes[0]) * (2.0 * t + t ** 2 * np.pi ** 2)

    errs = []
    for nt in (8, 16, 32):
        req = sv.SolveRequest("box", IDENTITY1, forcing, (0.0,), (1.0,), (256,),
                              t1=0.5, nt=nt)
        u = sv.solve(req)
        xs = u.axis_coords(0)
        ts = u.times()
        exact = ts[None, :] ** 2 * np.sin(np.pi * xs)[:, None]
        errs.append(np.max(np.abs(u.values - exact)))
    orders = [np.log2(errs[k] / errs[k + 1]) for k in range(2)]
    assert min(orders) >= 0.9


def test_manufactured_halfspace_and_wholespace_tags():
    # u* = t x_n exp(-|x|^2): vanishes at the wall, decays at truncation
    q = 1.0

    def forcing_half(meshes, t):
        x1, xn = meshes
        g = np.exp(-q * (x1 ** 2 + xn ** 2))
        lap = g * xn * (4 * q ** 2 * (x1 ** 2 + xn ** 2) - 8 * q)
        return xn * g - t * lap

    errs = []
    for lvl in range(2):
        cells = 24 * 2 ** lvl
        req = sv.SolveRequest("halfspace", IDENTITY2, forcing_half,
                              (-4.0, 0.0), (4.0, 4.0), (cells, cells),
                              t1=0.4, nt=4 * 2 ** lvl)
        u = sv.solve(req)
        m = u.space_meshes()
        ts = u.times()
        exact = (ts[None, None, :] * (m[1] * np.exp(-q * (m[0] ** 2 + m[1] ** 2)))[..., None])
        errs.append(np.max(np.abs(u.values - exact)))
    assert np.log2(errs[0] / errs[1]) >= 1.7  # linear-in-t data: h^2 visible


def test_residual_identity_of_scheme():
    # backward-difference du/dt minus abar contracted Hessian equals f exactly
    forcing = sv.gaussian_bump_forcing([0.4, 0.6], 0.12, 0.0, 0.4)
    req = box_request(SWITCH2, forcing, cells=10, nt=10)
    u = sv.solve(req)
    ut, hess = sv.derivatives(u)
    times = u.times()
    dt = u.spacings[-1]
    meshes = u.space_meshes()
    worst = 0.0
    for k, t in enumerate(times):
        abar = SWITCH2.integral(t - dt, t) / dt
        drift = np.zeros(u.values.shape[:-1])
        for (i, j), g in hess.items():
            mult = 2.0 if i != j else 1.0
            drift += mult * abar[i, j] * g.values[..., k]
        resid = ut.values[..., k] - drift - forcing(meshes, t)
        worst = max(worst, float(np.max(np.abs(resid))))
    assert worst <= 1e-10


def test_hessian_exact_on_quadratic():
    g = box_request(IDENTITY2, None, cells=12, nt=4).empty_grid()
    m = g.space_meshes()
    vals = np.repeat((2.0 * m[0] ** 2 - m[0] * m[1] + 3.0 * m[1] ** 2)[..., None],
                     4, axis=-1)
    hess_xx = _fd.hessian_entry(vals, 0, 0, g.spacings)
    hess_xy = _fd.hessian_entry(vals, 0, 1, g.spacings)
    inner = (slice(1, -1), slice(1, -1), slice(None))
    assert np.allclose(hess_xx[inner], 4.0, atol=1e-11)
    assert np.allclose(hess_xy[inner], -1.0, atol=1e-11)


def test_time_derivative_exact_on_linear():
    g = box_request(IDENTITY1, None, cells=6, nt=8).empty_grid()
    ts = g.times()
    vals = np.tile(3.0 * ts, (6, 1))
    u = g.with_values(vals)
    ut, _ = sv.derivatives(u)
    assert np.allclose(ut.values, 3.0, atol=1e-12)


def test_halfspace_wall_value_vanishes():
    # with the antisymmetric ghost the reconstructed wall value is exactly 0;
    # equivalently the solve stays consistent with a wall row of zeros
    forcing = sv.gaussian_bump_forcing([0.5], 0.1, 0.0, 0.4)
    req = sv.SolveRequest("halfspace", IDENTITY1, forcing, (0.0,), (2.0,),
                          (32,), t1=0.5, nt=16)
    u = sv.solve(req)
    ghost = -u.values[0]  # u(-h/2) by construction of the scheme
    wall = 0.5 * (ghost + u.values[0])
    assert np.max(np.abs(wall)) == 0.0
    # and the interior row satisfies the stencil with that ghost: linear decay
    assert np.max(np.abs(u.values[0])) < np.max(np.abs(u.values[2]))


# -- coercivity ------------------------------------------------------------------

def test_whole_space_frobenius_ratio_heat():
    forcing = sv.gaussian_bump_forcing([0.0, 0.0], 0.3, 0.0, 0.5)
    req = sv.SolveRequest("wholespace", IDENTITY2, forcing, (-3.0, -3.0),
                          (3.0, 3.0), (48, 48), t1=0.8, nt=24)
    rep = sv.coercivity_report(req, NormSpec(2, 2))
    assert rep.frobenius_ratio <= 1.05
    assert rep.ut_norm / rep.f_norm <= 1.05


def test_coercivity_zero_forcing_sentinel():
    req = box_request(IDENTITY2, None, cells=8, nt=8)
    rep = sv.coercivity_report(req, NormSpec(2, 2))
    assert rep.sum_ratio == 0.0
    assert rep.frobenius_ratio == 0.0


def test_mu_scan_interior_stable_and_sharp_grows():
    res = sv.mu_scan(SWITCH2, 2.0, 2.0, [0.0, 1.0], levels=3,
                     base_counts=8, base_nt=8, extent=0.8, t1=0.5)
    for growth in res["growth"].values():
        assert max(growth) <= 1.25
    sharp = sv.mu_scan(SWITCH2, 2.0, 2.0, [1.8], levels=3,
                       forcing_kind="boundary", bump_distance=0.2,
                       distance_shrink=4.0, base_counts=8, base_nt=8,
                       extent=0.8, t1=0.5)
    assert all(g >= 1.5 for g in sharp["growth"][1.8])


# -- time change -------------------------------------------------------------------

def test_time_change_identity():
    tc = sv.time_change(IDENTITY1)
    assert tc(1.7) == pytest.approx(1.7)
    assert tc.rhs_scale(0.3) == pytest.approx(1.0)


def test_time_change_piecewise():
    f = CoefficientField(np.array([0.0, 1.0, 2.0]),
                         np.array([[[2.0]], [[0.5]]]), nu=0.5)
    tc = sv.time_change(f)
    assert tc(2.0) == pytest.approx(2.5)
    assert tc(1.0) == pytest.approx(2.0)
    ts = np.linspace(-0.5, 2.5, 61)
    taus = tc(ts)
    assert np.all(np.diff(taus) > 0)
    # two-sided Lipschitz window from ellipticity
    for t1, t2 in [(0.2, 0.9), (0.5, 1.7), (-0.3, 2.2)]:
        ratio = (tc(t2) - tc(t1)) / (t2 - t1)
        assert f.nu - 1e-12 <= ratio <= 1.0 / f.nu + 1e-12


def test_time_change_requires_elliptic_ann():
    bad = CoefficientField(np.array([0.0, 1.0]), np.array([[[0.2]]]), nu=0.5)
    with pytest.raises(ValueError):
        sv.time_change(bad)


def test_delta_propagation_error_small():
    err = sv.delta_propagation_error(SWITCH1, cells=192, nsteps=256)
    assert err <= 0.01
