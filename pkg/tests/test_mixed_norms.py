import numpy as np
import pytest

from parakernel.mixed_norms import (
    GridDataError,
    GridFunction,
    NormSpec,
    NormSpecError,
    cell_centered_grid,
    load_grid,
    norm,
    norm_ratio,
    save_grid,
)


def unit_box_grid(n=2, counts=16, nt=16, domain="box"):
    return cell_centered_grid(domain, [0.0] * n, [1.0] * n, [counts] * n, 0.0, 1.0, nt)


def test_unit_mass():
    g = unit_box_grid()
    f = g.with_values(np.ones_like(g.values))
    for p, q in [(2, 2), (3, 1.5), (1.01, 64)]:
        for order in ("space_then_time", "time_then_space"):
            assert norm(f, NormSpec(p, q, order)) == pytest.approx(1.0, rel=1e-13)


def test_separable_fubini():
    g = unit_box_grid(n=1, counts=64, nt=48)
    x = g.axis_coords(0)
    t = g.times()
    gx = np.sin(2.1 * x) + 1.3
    ht = np.cos(1.7 * t) + 1.1
    f = g.with_values(gx[:, None] * ht[None, :])
    for order in ("space_then_time", "time_then_space"):
        spec = NormSpec(3.0, 2.0, order)
        prod = norm(f, spec)
        nx = (np.sum(gx ** 3) * g.spacings[0]) ** (1 / 3)
        ntm = (np.sum(ht ** 2) * g.spacings[1]) ** (1 / 2)
        assert prod == pytest.approx(nx * ntm, rel=1e-12)


def test_weighted_halfspace_analytic():
    # f == 1 on (0,1)x(0,1), weight x^1, p=q=2 -> (int_0^1 x^2 dx)^{1/2} = 3^{-1/2}
    g = cell_centered_grid("halfspace", [0.0], [1.0], [400], 0.0, 1.0, 4)
    f = g.with_values(np.ones_like(g.values))
    spec = NormSpec(2, 2, weight="normal_coordinate", mu=1.0)
    assert norm(f, spec) == pytest.approx(3 ** -0.5, rel=1e-5)


def test_weighted_convergence_order_two():
    spec = NormSpec(2, 2, weight="normal_coordinate", mu=1.0)
    errs = []
    for c in (25, 50, 100):
        g = cell_centered_grid("halfspace", [0.0], [1.0], [c], 0.0, 1.0, 2)
        f = g.with_values(np.ones_like(g.values))
        errs.append(abs(norm(f, spec) - 3 ** -0.5))
    order = np.log2(errs[0] / errs[1])
    assert order >= 1.9
    assert np.log2(errs[1] / errs[2]) >= 1.9


def test_boundary_distance_weight():
    g = unit_box_grid(n=2, counts=64, nt=2)
    f = g.with_values(np.ones_like(g.values))
    spec = NormSpec(2, 2, weight="boundary_distance", mu=0.5)
    # exact: int over unit square of dist(x) dx with dist = min to the 4 sides
    # = 2 * int_0^{1/2} d * (1 - 2d) * 2 ... computed by fine reference below
    xs = (np.arange(2048) + 0.5) / 2048
    xx, yy = np.meshgrid(xs, xs, indexing="ij")
    d = np.minimum(np.minimum(xx, 1 - xx), np.minimum(yy, 1 - yy))
    ref = np.sqrt(np.mean(d))
    assert norm(f, spec) == pytest.approx(ref, rel=1e-3)


def test_homogeneity_and_triangle():
    g = unit_box_grid(n=2, counts=12, nt=10)
    rng = np.random.default_rng(0)
    a = g.with_values(rng.normal(size=g.values.shape))
    b = g.with_values(rng.normal(size=g.values.shape))
    for order in ("space_then_time", "time_then_space"):
        spec = NormSpec(2.5, 3.5, order)
        assert norm(a.with_values(-2.0 * a.values), spec) == pytest.approx(
            2.0 * norm(a, spec), rel=1e-13)
        s = g.with_values(a.values + b.values)
        assert norm(s, spec) <= norm(a, spec) + norm(b, spec) + 1e-12


def test_pq_collapse_orders_agree():
    g = unit_box_grid(n=2, counts=10, nt=14)
    rng = np.random.default_rng(4)
    f = g.with_values(rng.normal(size=g.values.shape))
    for p in (2.0, 3.7):
        v1 = norm(f, NormSpec(p, p, "space_then_time"))
        v2 = norm(f, NormSpec(p, p, "time_then_space"))
        assert v1 == pytest.approx(v2, rel=1e-12)


def test_norm_ratio_sentinels():
    g = unit_box_grid(n=1, counts=8, nt=8)
    zero = g.with_values(np.zeros_like(g.values))
    one = g.with_values(np.ones_like(g.values))
    spec = NormSpec(2, 2)
    assert norm_ratio([zero, zero], one, spec) == 0.0
    assert norm_ratio(one, one, spec) == pytest.approx(1.0)
    assert norm_ratio(one, zero, spec) == np.inf
    assert norm_ratio(zero, zero, spec) == 0.0


def test_lattice_mismatch_rejected():
    a = unit_box_grid(n=1, counts=8, nt=8)
    b = unit_box_grid(n=1, counts=9, nt=8)
    with pytest.raises(GridDataError):
        norm_ratio(a, b, NormSpec(2, 2))


def test_nonfinite_rejected():
    g = unit_box_grid(n=1, counts=4, nt=4)
    bad = g.values.copy()
    bad[0, 0] = np.nan
    with pytest.raises(GridDataError):
        norm(g.with_values(bad), NormSpec(2, 2))


def test_weight_domain_compatibility():
    box = unit_box_grid(n=1, counts=4, nt=4)
    with pytest.raises(NormSpecError):
        norm(box, NormSpec(2, 2, weight="normal_coordinate", mu=1.0))
    half = cell_centered_grid("halfspace", [0.0], [1.0], [4], 0.0, 1.0, 4)
    with pytest.raises(NormSpecError):
        norm(half, NormSpec(2, 2, weight="boundary_distance", mu=1.0))


def test_exponent_range_enforced():
    with pytest.raises(NormSpecError):
        NormSpec(1.0, 2.0)
    with pytest.raises(NormSpecError):
        NormSpec(2.0, 100.0)
    with pytest.raises(NormSpecError):
        NormSpec(2.0, np.inf)  # plain order
    NormSpec(2.0, np.inf, "time_then_space")  # appendix sup-in-time form


def test_halfspace_grid_must_be_cell_centered():
    with pytest.raises(GridDataError):
        GridFunction(np.zeros((4, 4)), (0.25, 0.25), (0.0, 0.125), domain="halfspace")


def test_negative_mu_finite_on_cell_centered():
    g = cell_centered_grid("halfspace", [0.0], [1.0], [32], 0.0, 1.0, 4)
    f = g.with_values(np.ones_like(g.values))
    v = norm(f, NormSpec(2, 2, weight="normal_coordinate", mu=-0.3))
    assert np.isfinite(v)


def test_save_load_roundtrip(tmp_path):
    g = cell_centered_grid("halfspace", [0.0, 0.0], [2.0, 1.0], [6, 5], 0.0, 0.5, 7)
    f = g.with_values(np.arange(np.prod(g.values.shape), dtype=float).reshape(g.values.shape))
    save_grid(f, tmp_path / "dump")
    back = load_grid(tmp_path / "dump")
    assert back.same_lattice(f)
    assert back.domain == "halfspace"
    assert np.array_equal(back.values, f.values)
