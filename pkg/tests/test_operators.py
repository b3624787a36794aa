import numpy as np
import pytest

from parakernel.coeffs import CoefficientField, accumulate
from parakernel import operators as op
from parakernel import _gausspoly as gp
from parakernel.kernel_wholespace import gaussian_value
from parakernel.mixed_norms import NormSpec, cell_centered_grid, norm


IDENTITY2 = CoefficientField.identity(2)
SWITCH2 = CoefficientField.switching(2, nu=0.5, switches=8)


def small_grid(domain="wholespace", counts=12, nt=8):
    if domain == "halfspace":
        return cell_centered_grid(domain, [-2, 0], [2, 2], [counts, counts],
                                  0.0, 1.0, nt)
    return cell_centered_grid(domain, [-2, -2], [2, 2], [counts, counts],
                              0.0, 1.0, nt)


def direct_apply_at(selector, h, ix, iy, k):
    """Direct lattice summation oracle for one output point."""
    field = selector.field
    grid = h
    meshes = np.stack(grid.space_meshes(), axis=-1)
    times = h.times()
    dt = h.spacings[-1]
    x = meshes[ix, iy]
    t_k = times[k]
    hmax = max(h.spacings[:-1])
    tau_floor = (1.5 * hmax) ** 2 / (2.0 * field.nu)
    nodes = op._s_nodes(times, dt, k, 12, tau_floor)
    wq = np.zeros(nodes.size)
    gaps = np.diff(nodes)
    wq[:-1] += 0.5 * gaps
    wq[1:] += 0.5 * gaps
    wq[-1] += t_k - nodes[-1]
    gidx = [0, 0]
    gidx[selector.i] += 1
    gidx[selector.j] += 1
    mu = selector.mu
    total = 0.0
    cell = grid.cell_measure
    for s, w in zip(nodes, wq):
        acc = accumulate(field, s, t_k)
        poly = gp.derivative_poly(acc.inverse, tuple(gidx))
        slc = op._interp_slice(h.values, times, s)
        K0 = gp.poly_eval(poly, x - meshes) * gaussian_value(acc, x - meshes)
        if selector.kind in ("frakG", "frakG_hat"):
            val = np.sum(K0 * (slc - slc[ix, iy])) * cell
            if selector.kind == "frakG_hat" and not x[1] > np.sqrt(t_k - s):
                val = 0.0
            total += w * val
            continue
        gin = slc * meshes[..., 1] ** (-mu)
        gx = slc[ix, iy] * x[1] ** (-mu)
        part = np.sum(K0 * (gin - gx)) * cell
        if selector.i == 1 and selector.j == 1:
            bnn = acc.matrix[-1, -1]
            g1 = (4 * np.pi * bnn) ** -0.5 * np.exp(-x[1] ** 2 / (4 * bnn))
            part += gx * (-x[1] / (2 * bnn) * g1)
        ystar = meshes.copy()
        ystar[..., 1] = -ystar[..., 1]
        K1 = gp.poly_eval(poly, x - ystar) * gaussian_value(acc, x - ystar)
        img = np.sum(K1 * gin) * cell
        val = x[1] ** mu * (part - img)
        if selector.kind == "calG":
            part0 = np.sum(K0 * (slc - slc[ix, iy])) * cell
            if selector.i == 1 and selector.j == 1:
                bnn = acc.matrix[-1, -1]
                g1 = (4 * np.pi * bnn) ** -0.5 * np.exp(-x[1] ** 2 / (4 * bnn))
                part0 += slc[ix, iy] * (-x[1] / (2 * bnn) * g1)
            if x[1] > np.sqrt(t_k - s):
                val -= part0
        total += w * val
    return total


# -- selector validation -----------------------------------------------------------

def test_selector_validation():
    with pytest.raises(op.OperatorSpecError):
        op.KernelSelector("bogus", IDENTITY2, 0, 0)
    with pytest.raises(op.OperatorSpecError):
        op.KernelSelector("frakG", IDENTITY2, 0, 5)
    m = np.eye(2)
    m[0, 1] = m[1, 0] = 0.3
    tilted = CoefficientField.constant(m)
    with pytest.raises(op.OperatorSpecError):
        op.KernelSelector("calG", tilted, 0, 0)


def test_within_theorem_flag():
    assert op.KernelSelector("frakG_hat", IDENTITY2, 0, 0).within_theorem
    assert not op.KernelSelector("frakG_hat", IDENTITY2, 1, 1).within_theorem
    assert op.KernelSelector("frakG", IDENTITY2, 1, 1).within_theorem
    assert op.KernelSelector("calG", IDENTITY2, 1, 0).within_theorem


# -- apply ------------------------------------------------------------------------

@pytest.mark.parametrize("kind,mu,ij", [
    ("frakG", 0.0, (0, 0)), ("frakG_hat", 0.0, (0, 1)),
    ("frakG_D", 0.7, (0, 1)), ("calG", 1.0, (1, 1))])
def test_apply_matches_direct_summation(kind, mu, ij):
    domain = "halfspace" if kind in ("frakG_D", "calG") else "wholespace"
    grid = small_grid(domain)
    h = op.random_gaussian_sum(grid, np.random.default_rng(3))
    sel = op.KernelSelector(kind, SWITCH2, ij[0], ij[1], mu=mu)
    out = op.apply(sel, h)
    for (ix, iy, k) in [(6, 2, 4), (3, 9, 7), (10, 5, 6)]:
        ref = direct_apply_at(sel, h, ix, iy, k)
        assert out.values[ix, iy, k] == pytest.approx(ref, rel=1e-10, abs=1e-13)


def test_apply_zero_input():
    grid = small_grid()
    sel = op.KernelSelector("frakG", IDENTITY2, 0, 0)
    out = op.apply(sel, grid)
    assert np.max(np.abs(out.values)) == 0.0


def test_apply_constant_interior_near_zero():
    # constant h: the subtracted inner integral vanishes identically
    grid = small_grid(counts=16)
    h = grid.with_values(np.ones_like(grid.values))
    sel = op.KernelSelector("frakG", IDENTITY2, 0, 0)
    out = op.apply(sel, h)
    interior = out.values[6:10, 6:10, :]
    assert np.max(np.abs(interior)) < 2e-2  # edge effects only


def test_apply_linearity_and_causality():
    grid = small_grid()
    rng = np.random.default_rng(5)
    h1 = op.random_gaussian_sum(grid, rng)
    h2 = op.random_gaussian_sum(grid, rng)
    sel = op.KernelSelector("frakG_hat", SWITCH2, 0, 1)
    combo = op.apply(sel, grid.with_values(1.5 * h1.values - 2.0 * h2.values))
    ref = 1.5 * op.apply(sel, h1).values - 2.0 * op.apply(sel, h2).values
    assert np.allclose(combo.values, ref, atol=1e-12)
    modified = h1.values.copy()
    modified[..., -2:] += 7.0
    out_mod = op.apply(sel, grid.with_values(modified))
    out_ref = op.apply(sel, h1)
    assert np.array_equal(out_mod.values[..., :-2], out_ref.values[..., :-2])


def test_truncation_consistency():
    # frakG_hat equals frakG masked to contributions with x_n > sqrt(t-s);
    # with a single late bump the mask reduces to the output indicator
    grid = small_grid(counts=10, nt=6)
    h = op.random_gaussian_sum(grid, np.random.default_rng(8))
    hat = op.apply(op.KernelSelector("frakG_hat", IDENTITY2, 0, 1), h)
    plain_pt = direct_apply_at(op.KernelSelector("frakG", IDENTITY2, 0, 1), h, 7, 3, 4)
    hat_pt = direct_apply_at(op.KernelSelector("frakG_hat", IDENTITY2, 0, 1), h, 7, 3, 4)
    assert hat.values[7, 3, 4] == pytest.approx(hat_pt, rel=1e-10)
    xn = grid.axis_coords(1)[3]
    times = grid.times()
    if xn ** 2 >= times[4] - times[0]:
        assert hat_pt == pytest.approx(plain_pt, rel=1e-10)


def test_discrete_zero_mean_identity():
    # lattice sum of the Hessian slice is tiny once the kernel is resolved
    # (tau >= 10 h^2) and its Gaussian tail is contained in the lattice
    grid = small_grid(counts=36)
    cache = op._SliceCache(op.KernelSelector("frakG", IDENTITY2, 0, 0), grid)
    h2 = grid.spacings[0] ** 2
    direct, _ = cache.slices(0.0, 10.0 * h2)
    assert abs(direct.sum()) < 1e-8


def test_apply_domain_mismatch():
    grid = small_grid("wholespace")
    sel = op.KernelSelector("frakG_D", IDENTITY2, 0, 0)
    with pytest.raises(op.OperatorSpecError):
        op.apply(sel, grid)


def test_apply_transpose_is_adjoint():
    grid = small_grid(counts=10, nt=6)
    rng = np.random.default_rng(11)
    a = op.random_gaussian_sum(grid, rng)
    b = op.random_gaussian_sum(grid, rng)
    for kind in ("frakG", "frakG_hat"):
        sel = op.KernelSelector(kind, SWITCH2, 0, 1)
        lhs = np.sum(op.apply(sel, a).values * b.values)
        rhs = np.sum(a.values * op.apply_transpose(sel, b).values)
        assert lhs == pytest.approx(rhs, rel=1e-10)


# -- probes ------------------------------------------------------------------------

def test_operator_norm_probe_zero_kernel_analogue():
    # zero input trial guard: a kernel applied to nothing yields 0 estimates
    sel = op.KernelSelector("frakG", IDENTITY2, 0, 1)
    rep = op.operator_norm_probe(sel, NormSpec(2, 2), NormSpec(2, 2), trials=1,
                                 refinements=1, base_counts=6, base_nt=6)
    assert rep.estimates[0] > 0  # real kernel: positive estimate


def test_operator_norm_probe_monotone_in_trials():
    sel = op.KernelSelector("frakG_hat", SWITCH2, 0, 0)
    est = []
    for trials in (1, 3):
        rep = op.operator_norm_probe(sel, NormSpec(2, 2), NormSpec(2, 2),
                                     trials=trials, refinements=1,
                                     base_counts=8, base_nt=8, power_iters=0)
        est.append(rep.estimates[0])
    assert est[1] >= est[0] - 1e-14


def test_operator_norm_probe_stability_and_verdict():
    sel = op.KernelSelector("frakG_hat", SWITCH2, 0, 0)
    rep = op.operator_norm_probe(sel, NormSpec(2, 2), NormSpec(2, 2), trials=3,
                                 refinements=3, base_counts=8, base_nt=8)
    assert rep.verdict == "pass"
    assert all(g <= 1.25 for g in rep.growth)


def test_operator_norm_probe_outside_hypothesis():
    sel = op.KernelSelector("frakG_hat", SWITCH2, 1, 1)
    rep = op.operator_norm_probe(sel, NormSpec(2, 2), NormSpec(2, 2), trials=1,
                                 refinements=2, base_counts=6, base_nt=6,
                                 power_iters=0)
    assert rep.verdict == "outside-hypothesis"


def test_cancellation_probe_moment_exact_and_stable():
    sel = op.KernelSelector("frakG", SWITCH2, 0, 1)
    rep = op.cancellation_decay_probe(sel, "space_moment_zero", [0.2, 0.1],
                                      center=[0.3, 0.1], s0=0.3)
    assert all(m <= 1e-12 for m in rep.moment_residuals)
    assert all(r > 0 for r in rep.ratios)
    assert rep.stable


def test_cancellation_probe_bad_geometry():
    sel = op.KernelSelector("frakG", SWITCH2, 0, 0)
    with pytest.raises(op.OperatorSpecError):
        op.cancellation_decay_probe(sel, "bogus", [0.1], center=[0, 0.5])
