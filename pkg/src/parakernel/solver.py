"""Finite-difference solution of the model equation and coercivity probes.

Solves du/dt - a^{ij}(t) D_i D_j u = f with zero initial and Dirichlet data on
three domain tags: a truncated whole-space box, the half-space {x_n > 0}
(truncated away from the wall), and a bounded box. Implicit Euler in time with
exact per-step coefficient averages, second-order cell-centered differences in
space (see `_fd`). Coercivity reports measure mixed-norm ratios of du/dt and
the Hessian against the forcing, in both integration orders and with optional
x_n^mu or boundary-distance weights.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field

import numpy as np

from . import _fd
from .coeffs import CoefficientField, accumulate
from .mixed_norms import (
    GridFunction,
    NormSpec,
    cell_centered_grid,
    norm,
    norm_ratio,
)


class SolveRequestError(ValueError):
    """Malformed solve request."""


# -- forcing families ---------------------------------------------------------


def time_window(t, t_on: float, t_off: float):
    """C^1 sin^2 envelope on (t_on, t_off), 0 outside."""
    t = np.asarray(t, dtype=float)
    inside = (t > t_on) & (t < t_off)
    phase = np.where(inside, (t - t_on) / (t_off - t_on), 0.0)
    return np.where(inside, np.sin(np.pi * phase) ** 2, 0.0)


def gaussian_bump_forcing(center, width: float, t_on: float, t_off: float,
                          amplitude: float = 1.0):
    """Smooth space-time bump: Gaussian in space, sin^2 window in time."""
    center = np.atleast_1d(np.asarray(center, dtype=float))

    def forcing(meshes, t):
        q = np.zeros(meshes[0].shape)
        for m, c in zip(meshes, center):
            q = q + (m - c) ** 2
        return amplitude * np.exp(-q / (2.0 * width ** 2)) * time_window(t, t_on, t_off)

    return forcing


def boundary_bump_forcing(distance: float, width: float, tangential_center,
                          tangential_width: float, t_on: float, t_off: float,
                          amplitude: float = 1.0):
    """Bump concentrated at x_n ~ distance from the wall, smooth elsewhere."""
    tc = np.atleast_1d(np.asarray(tangential_center, dtype=float))

    def forcing(meshes, t):
        xn = meshes[-1]
        q = (xn - distance) ** 2 / (2.0 * width ** 2)
        for m, c in zip(meshes[:-1], tc):
            q = q + (m - c) ** 2 / (2.0 * tangential_width ** 2)
        return amplitude * np.exp(-q) * time_window(t, t_on, t_off)

    return forcing


@dataclass(frozen=True)
class SolveRequest:
    """Everything needed for one forced solve on a cell-centered lattice."""

    domain: str
    field: CoefficientField
    forcing: object  # callable(meshes, t) -> array, or None for f == 0
    lows: tuple
    highs: tuple
    counts: tuple
    t1: float
    nt: int
    t0: float = 0.0

    def __post_init__(self):
        if self.domain not in ("wholespace", "halfspace", "box"):
            raise SolveRequestError(f"unknown domain {self.domain!r}")
        if len(self.lows) != self.field.dimension:
            raise SolveRequestError("box extents must match the field dimension")
        if self.domain == "halfspace" and abs(self.lows[-1]) > 0:
            raise SolveRequestError("half-space grid must start at the wall x_n = 0")
        if not self.t1 > self.t0:
            raise SolveRequestError("need t1 > t0")
        if self.nt < 2:
            raise SolveRequestError("need at least two time steps")

    def refined(self, space_factor: int = 2, time_factor: int = 2) -> "SolveRequest":
        return SolveRequest(self.domain, self.field, self.forcing,
                            self.lows, self.highs,
                            tuple(int(c) * space_factor for c in self.counts),
                            self.t1, self.nt * time_factor, self.t0)

    def empty_grid(self) -> GridFunction:
        g = cell_centered_grid(self.domain, list(self.lows), list(self.highs),
                               list(self.counts), self.t0, self.t1, self.nt)
        # solver time nodes are the implicit step ends t0 + k*dt, k = 1..nt
        dt = (self.t1 - self.t0) / self.nt
        offsets = list(g.offsets)
        offsets[-1] = self.t0 + dt
        return GridFunction(g.values, g.spacings, tuple(offsets), domain=g.domain,
                            bounds=g.bounds)


def _space_meshes(g: GridFunction):
    return g.space_meshes()


def sample_forcing(req: SolveRequest) -> GridFunction:
    """The forcing evaluated on the solve lattice at the implicit step times."""
    g = req.empty_grid()
    if req.forcing is None:
        return g
    meshes = _space_meshes(g)
    vals = np.empty(g.values.shape)
    for k, t in enumerate(g.times()):
        vals[..., k] = req.forcing(meshes, t)
    return g.with_values(vals)


def solve(req: SolveRequest, method: str = "fd") -> GridFunction:
    """Solve with zero initial data and Dirichlet faces.

    method='fd' is the implicit-Euler path on any domain; method='kernel' is
    the whole-space cross-check oracle u = integral of gamma(x,y;t,s) f(y,s),
    evaluated by FFT lattice convolution with a time mesh graded toward s = t.
    """
    if method == "kernel":
        return _solve_kernel(req)
    if method != "fd":
        raise SolveRequestError(f"unknown method {method!r}")
    g = req.empty_grid()
    stepper = _fd.ImplicitStepper(req.field, g.values.shape[:-1], g.spacings[:-1])
    meshes = _space_meshes(g)
    dt = g.spacings[-1]
    if req.forcing is None:
        forcing = None
    else:
        def forcing(t):
            return req.forcing(meshes, t)
    hist = stepper.run(np.zeros(g.values.shape[:-1]), req.t0, dt, req.nt, forcing)
    return g.with_values(hist)


def _solve_kernel(req: SolveRequest) -> GridFunction:
    """Whole-space representation-formula solve on the lattice.

    Below tau_switch ~ h^2 the kernel is sub-grid and the convolution is
    replaced by its exact limit f(x, s) (unit kernel mass), which keeps the
    graded time mesh from sampling unresolved spikes.
    """
    from scipy.signal import fftconvolve

    from .coeffs import accumulate
    from .kernel_wholespace import gaussian_value

    if req.domain != "wholespace":
        raise SolveRequestError("kernel-convolution path is whole-space only")
    g = req.empty_grid()
    f = sample_forcing(req)
    n = g.space_dim
    times = g.times()
    dt = g.spacings[-1]
    cell = g.cell_measure
    diff_axes = []
    for k in range(n):
        m = g.values.shape[k]
        diff_axes.append(g.spacings[k] * np.arange(-(m - 1), m))
    diff_mesh = np.stack(np.meshgrid(*diff_axes, indexing="ij"), axis=-1)
    hmax = max(g.spacings[:-1])
    tau_switch = (1.5 * hmax) ** 2 / (2.0 * req.field.nu)
    slice_cache: dict = {}

    def kernel_slice(s_val, t_val):
        acc = accumulate(req.field, s_val, t_val)
        key = np.round(acc.matrix, 13).tobytes()
        hit = slice_cache.get(key)
        if hit is None:
            hit = gaussian_value(acc, diff_mesh) * cell
            if len(slice_cache) < 512:
                slice_cache[key] = hit
        return hit

    def f_at(s):
        if s <= times[0] - dt:
            return np.zeros(g.values.shape[:-1])
        if req.forcing is None:
            return np.zeros(g.values.shape[:-1])
        meshes = _space_meshes(g)
        return req.forcing(meshes, s)

    out = np.zeros(g.values.shape)
    for k in range(times.size):
        t_k = times[k]
        lattice = list(times[:k])
        graded = [t_k - dt * 0.5 ** lev for lev in range(13)]
        nodes = np.unique(np.asarray(lattice + graded + [t_k]))
        nodes = nodes[nodes <= t_k]
        wq = np.zeros(nodes.size)
        gaps = np.diff(nodes)
        wq[:-1] += 0.5 * gaps
        wq[1:] += 0.5 * gaps
        total = np.zeros(g.values.shape[:-1])
        for s_val, w_s in zip(nodes, wq):
            if w_s == 0.0:
                continue
            fs = f_at(s_val)
            if t_k - s_val < tau_switch:
                total += w_s * fs
                continue
            total += w_s * fftconvolve(kernel_slice(s_val, t_k), fs, mode="valid")
        out[..., k] = total
    return g.with_values(out)


def derivatives(u: GridFunction, initial: np.ndarray | None = None):
    """(du/dt, {(i,j): D_i D_j u}) with the stencils of the implicit step.

    du/dt is the backward difference aligned with the stepping; ``initial`` is
    the state before the first stored slice (zeros for `solve` output).
    """
    vals = u.values
    nt = vals.shape[-1]
    if nt < 1:
        raise ValueError("need at least one time slice")
    dt = u.spacings[-1]
    prev = np.zeros(vals.shape[:-1]) if initial is None else np.asarray(initial, float)
    shifted = np.concatenate([prev[..., None], vals[..., :-1]], axis=-1)
    ut = u.with_values((vals - shifted) / dt)
    n = u.space_dim
    hess = {}
    for i in range(n):
        for j in range(i, n):
            hess[(i, j)] = u.with_values(_fd.hessian_entry(vals, i, j, u.spacings))
    return ut, hess


def hessian_frobenius(hess: dict, like: GridFunction) -> GridFunction:
    """Pointwise Frobenius norm of the Hessian, off-diagonal entries twice."""
    total = np.zeros(like.values.shape)
    for (i, j), g in hess.items():
        mult = 1.0 if i == j else 2.0
        total += mult * g.values ** 2
    return like.with_values(np.sqrt(total))


@dataclass
class CoercivityReport:
    """Mixed-norm ratios of one forced solve at one (p, q, mu, order)."""

    domain: str
    p: float
    q: float
    order: str
    weight: str
    mu: float
    level: int
    f_norm: float
    ut_norm: float
    hessian_norms: dict
    sum_ratio: float
    frobenius_ratio: float
    counts: tuple = ()
    nt: int = 0

    def as_row(self) -> dict:
        row = {
            "domain": self.domain, "p": self.p, "q": self.q, "order": self.order,
            "weight": self.weight, "mu": self.mu, "level": self.level,
            "f_norm": self.f_norm, "ut_norm": self.ut_norm,
            "sum_ratio": self.sum_ratio, "frobenius_ratio": self.frobenius_ratio,
            "nt": self.nt,
        }
        row["counts"] = "x".join(str(c) for c in self.counts)
        for (i, j), v in sorted(self.hessian_norms.items()):
            row[f"d{i + 1}{j + 1}_norm"] = v
        return row


def coercivity_report(req: SolveRequest, spec: NormSpec, level: int = 0,
                      precomputed=None) -> CoercivityReport:
    """Solve, differentiate, and measure the coercive ratio in the given norm.

    ``precomputed`` may carry (u, f, ut, hess) to share one solve across specs.
    """
    if precomputed is None:
        u = solve(req)
        f = sample_forcing(req)
        ut, hess = derivatives(u)
    else:
        u, f, ut, hess = precomputed
    sum_num = [ut]
    weights = []
    for (i, j), g in sorted(hess.items()):
        sum_num.append(g)
        weights.append(2.0 if i != j else 1.0)
    fn = norm(f, spec)
    utn = norm(ut, spec)
    hn = {k: norm(g, spec) for k, g in hess.items()}
    total = utn + sum(w * hn[k] for w, k in zip(weights, sorted(hess.keys())))
    if fn < 1e-30:
        sum_ratio = 0.0 if total < 1e-30 else np.inf
        frob_ratio = 0.0 if total < 1e-30 else np.inf
    else:
        sum_ratio = total / fn
        frob_ratio = norm(hessian_frobenius(hess, u), spec) / fn
    return CoercivityReport(
        domain=req.domain, p=spec.p, q=spec.q, order=spec.order,
        weight=spec.weight, mu=spec.mu, level=level,
        f_norm=fn, ut_norm=utn, hessian_norms=hn,
        sum_ratio=float(sum_ratio), frobenius_ratio=float(frob_ratio),
        counts=tuple(req.counts), nt=req.nt,
    )


def solve_bundle(req: SolveRequest):
    """One solve shared by several norm specs."""
    u = solve(req)
    f = sample_forcing(req)
    ut, hess = derivatives(u)
    return u, f, ut, hess


def delta_propagation_error(field: CoefficientField, cells: int, nsteps: int,
                            s: float = 0.1, t: float = 0.6,
                            mask_frac: float = 0.1) -> float:
    """Relative error of the closed-form kernel against FD delta propagation.

    A unit-mass Gaussian surrogate of width 2h is launched at time s on a
    whole-space box of half-width 6 sqrt((t-s)/nu) and stepped implicitly to
    t; the reference is the kernel formula with the accumulated diffusion
    shifted by w0^2/2 (the exact propagation of the surrogate). The maximum
    relative error over points with reference at least mask_frac of the peak
    is returned.
    """
    n = field.dimension
    tau = t - s
    half = 6.0 * np.sqrt(tau / field.nu) + 0.5
    h = 2.0 * half / cells
    axes = [-half + h * (np.arange(cells) + 0.5) for _ in range(n)]
    meshes = np.meshgrid(*axes, indexing="ij")
    w0 = 2.0 * h
    q = sum(m ** 2 for m in meshes)
    u0 = (2.0 * np.pi * w0 ** 2) ** (-n / 2.0) * np.exp(-q / (2.0 * w0 ** 2))
    stepper = _fd.ImplicitStepper(field, u0.shape, (h,) * n)
    final = stepper.run(u0, s, tau / nsteps, nsteps, store_all=False)
    b = field.integral(s, t) + 0.5 * w0 ** 2 * np.eye(n)
    inv = np.linalg.inv(b)
    from .coeffs import AccumulatedDiffusion
    from .kernel_wholespace import gaussian_value

    ref = gaussian_value(
        AccumulatedDiffusion(b, float(np.linalg.det(b)), 0.5 * (inv + inv.T),
                             (float(s), float(t))),
        np.stack(meshes, axis=-1))
    mask = ref >= mask_frac * ref.max()
    return float(np.max(np.abs(final - ref)[mask] / ref[mask]))


# -- mu scan -------------------------------------------------------------------


def mu_scan(field: CoefficientField, p: float, q: float, mu_list, levels: int,
            *, extent: float = 1.0, t1: float = 0.5, base_counts=12, base_nt=12,
            order: str = "space_then_time", forcing_kind: str = "gaussian",
            bump_distance: float = 0.2, distance_shrink: float = 1.0,
            refine: int = 2) -> dict:
    """Table of weighted coercivity ratios over mu and refinement levels.

    Half-space domain with the x_n^mu weight. ``forcing_kind='boundary'`` uses
    a bump at x_n ~ bump_distance whose distance and width shrink by
    ``distance_shrink`` each level (the sharpness family); 'gaussian' keeps a
    fixed interior bump and only refines the grid.
    """
    n = field.dimension
    rows = []
    growth = {}
    for mu in mu_list:
        ratios = []
        for level in range(levels):
            counts = [int(base_counts) * refine ** level] * n
            nt = int(base_nt) * refine ** level
            if forcing_kind == "boundary":
                d = bump_distance / distance_shrink ** level
                forcing = boundary_bump_forcing(
                    distance=d, width=d / 3.0,
                    tangential_center=[0.0] * (n - 1), tangential_width=0.3,
                    t_on=0.0, t_off=0.6 * t1)
                # resolve the bump: at least ~5 cells across its width
                counts[-1] = max(counts[-1], int(np.ceil(extent / (d / 5.0))))
            else:
                center = [0.0] * (n - 1) + [0.45 * extent]
                forcing = gaussian_bump_forcing(center, 0.12 * extent, 0.0, 0.6 * t1)
            req = SolveRequest(
                domain="halfspace", field=field, forcing=forcing,
                lows=tuple([-extent] * (n - 1) + [0.0]),
                highs=tuple([extent] * (n - 1) + [extent]),
                counts=tuple(counts), t1=t1, nt=nt)
            spec = NormSpec(p, q, order, weight="normal_coordinate", mu=mu)
            rep = coercivity_report(req, spec, level=level)
            rows.append(rep)
            ratios.append(rep.sum_ratio)
        growth[mu] = [ratios[k + 1] / ratios[k] if ratios[k] > 0 else np.inf
                      for k in range(len(ratios) - 1)]
    return {"rows": rows, "growth": growth}


# -- time change ------------------------------------------------------------------


@dataclass(frozen=True)
class TimeChange:
    """Monotone map tau(t) = integral of a^{nn} on (0, t), piecewise linear."""

    knots_t: np.ndarray
    knots_tau: np.ndarray
    field: CoefficientField = dc_field(repr=False, default=None)

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        lo_slope = self.field.matrices[0][-1, -1]
        hi_slope = self.field.matrices[-1][-1, -1]
        out = np.interp(t, self.knots_t, self.knots_tau)
        out = np.where(t < self.knots_t[0],
                       self.knots_tau[0] + (t - self.knots_t[0]) * lo_slope, out)
        out = np.where(t > self.knots_t[-1],
                       self.knots_tau[-1] + (t - self.knots_t[-1]) * hi_slope, out)
        return out[()]

    def rhs_scale(self, t):
        """The transformed equation du/dtau - Lap u = f / a^{nn} carries this factor."""
        return 1.0 / self.field.matrix_at(t)[-1, -1]


def time_change(field: CoefficientField) -> TimeChange:
    if np.min(field.matrices[:, -1, -1]) < field.nu - 1e-12:
        raise ValueError("a^{nn} must be bounded below by nu")
    knots_t = field.breakpoints
    seg = np.diff(knots_t) * field.matrices[:, -1, -1]
    knots_tau = np.concatenate([[0.0], np.cumsum(seg)])
    # anchor tau(0) = 0 even when the breakpoints start elsewhere
    knots_tau = knots_tau - np.interp(0.0, knots_t, knots_tau)
    return TimeChange(knots_t=knots_t, knots_tau=knots_tau, field=field)
