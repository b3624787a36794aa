"""Discrete anisotropic mixed norms on space-time grid functions.

Grid functions live on tensor-product lattices with the time axis last; every
node carries the cell measure (product of spacings), i.e. midpoint-rule
quadrature. Two integration orders are supported: space-then-time (the plain
mixed norm) and time-then-space (the tilde norm). Weights are powers of the
normal coordinate x_n (half-space) or of the distance to the box boundary.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

DOMAINS = ("wholespace", "halfspace", "box")

ORDER_SPACE_TIME = "space_then_time"
ORDER_TIME_SPACE = "time_then_space"

WEIGHT_NONE = "none"
WEIGHT_NORMAL = "normal_coordinate"
WEIGHT_BOUNDARY = "boundary_distance"

DENOM_FLOOR = 1e-30


class NormSpecError(ValueError):
    """Norm specification incompatible with the grid or out of range."""


class GridDataError(ValueError):
    """Grid function data problem: non-finite values or lattice mismatch."""


@dataclass(frozen=True)
class GridFunction:
    """Scalar field on a space-time lattice (space axes first, time last).

    ``spacings`` and ``offsets`` have one entry per axis including time; the
    coordinate of index i along axis k is offsets[k] + i * spacings[k].
    ``bounds`` are the physical box extents per space axis (needed for the
    boundary-distance weight); half-space grids must be cell-centered in x_n.
    """

    values: np.ndarray
    spacings: tuple
    offsets: tuple
    domain: str = "box"
    bounds: tuple | None = None

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "spacings", tuple(float(h) for h in self.spacings))
        object.__setattr__(self, "offsets", tuple(float(o) for o in self.offsets))
        if self.domain not in DOMAINS:
            raise GridDataError(f"unknown domain tag {self.domain!r}")
        if vals.ndim != len(self.spacings) or vals.ndim != len(self.offsets):
            raise GridDataError("values/spacings/offsets rank mismatch")
        if vals.ndim < 2:
            raise GridDataError("need at least one space axis and one time axis")
        if any(h <= 0 for h in self.spacings):
            raise GridDataError("spacings must be positive")
        if self.domain == "halfspace":
            h = self.spacings[self.space_dim - 1]
            off = self.offsets[self.space_dim - 1]
            if abs(off - 0.5 * h) > 1e-12 * h:
                raise GridDataError(
                    f"half-space grid must be cell-centered in x_n (offset h/2), got {off}"
                )
        if self.bounds is not None:
            object.__setattr__(self, "bounds",
                               tuple((float(a), float(b)) for a, b in self.bounds))

    @property
    def space_dim(self) -> int:
        return self.values.ndim - 1

    @property
    def nt(self) -> int:
        return self.values.shape[-1]

    def axis_coords(self, k: int) -> np.ndarray:
        return self.offsets[k] + self.spacings[k] * np.arange(self.values.shape[k])

    def times(self) -> np.ndarray:
        return self.axis_coords(self.values.ndim - 1)

    def space_meshes(self) -> list:
        return np.meshgrid(*[self.axis_coords(k) for k in range(self.space_dim)],
                           indexing="ij")

    @property
    def cell_measure(self) -> float:
        out = 1.0
        for h in self.spacings[:-1]:
            out *= h
        return out

    def with_values(self, values: np.ndarray) -> "GridFunction":
        if values.shape != self.values.shape:
            raise GridDataError(f"shape mismatch {values.shape} vs {self.values.shape}")
        return replace(self, values=values)

    def same_lattice(self, other: "GridFunction") -> bool:
        return (self.values.shape == other.values.shape
                and self.spacings == other.spacings
                and self.offsets == other.offsets)


def cell_centered_grid(domain: str, lows, highs, counts, t0: float, t1: float,
                       nt: int, bounds=None) -> GridFunction:
    """Zero-valued grid function with cell-centered nodes on all axes."""
    lows = list(np.atleast_1d(np.asarray(lows, float)))
    highs = list(np.atleast_1d(np.asarray(highs, float)))
    counts = list(np.atleast_1d(np.asarray(counts, int)))
    spac, offs = [], []
    for lo, hi, c in zip(lows, highs, counts):
        h = (hi - lo) / int(c)
        spac.append(h)
        offs.append(lo + 0.5 * h)
    dt = (t1 - t0) / nt
    spac.append(dt)
    offs.append(t0 + 0.5 * dt)
    shape = tuple(int(c) for c in counts) + (nt,)
    if bounds is None and domain == "box":
        bounds = tuple((lo, hi) for lo, hi in zip(lows, highs))
    return GridFunction(np.zeros(shape), tuple(spac), tuple(offs), domain=domain,
                        bounds=bounds)


@dataclass(frozen=True)
class NormSpec:
    """Exponents, integration order, and weight of a mixed norm.

    p and q are accepted in [1.01, 64]; q may be infinite only for the
    time-then-space order (used by the appendix sup-in-time probe).
    """

    p: float
    q: float
    order: str = ORDER_SPACE_TIME
    weight: str = WEIGHT_NONE
    mu: float = 0.0

    def __post_init__(self):
        if self.order not in (ORDER_SPACE_TIME, ORDER_TIME_SPACE):
            raise NormSpecError(f"unknown order {self.order!r}")
        if self.weight not in (WEIGHT_NONE, WEIGHT_NORMAL, WEIGHT_BOUNDARY):
            raise NormSpecError(f"unknown weight {self.weight!r}")
        if not (1.01 <= self.p <= 64):
            raise NormSpecError(f"p={self.p} outside [1.01, 64]")
        if np.isinf(self.q):
            if self.order != ORDER_TIME_SPACE:
                raise NormSpecError("q=inf is only supported in the time-then-space order")
        elif not (1.01 <= self.q <= 64):
            raise NormSpecError(f"q={self.q} outside [1.01, 64]")

    def describe(self) -> str:
        w = "" if self.weight == WEIGHT_NONE else f", {self.weight}^{self.mu}"
        return f"L({self.p},{self.q}; {self.order}{w})"


def _weight_array(f: GridFunction, spec: NormSpec) -> np.ndarray | None:
    if spec.weight == WEIGHT_NONE:
        return None
    if spec.weight == WEIGHT_NORMAL:
        if f.domain != "halfspace":
            raise NormSpecError("normal_coordinate weight requires a half-space grid")
        xn = f.axis_coords(f.space_dim - 1)
        shape = [1] * f.values.ndim
        shape[f.space_dim - 1] = -1
        return (xn ** spec.mu).reshape(shape)
    # boundary distance on a bounded box
    if f.domain != "box":
        raise NormSpecError("boundary_distance weight requires a box grid")
    if f.bounds is None:
        raise NormSpecError("box grid needs bounds for the boundary-distance weight")
    meshes = f.space_meshes()
    dist = np.full(meshes[0].shape, np.inf)
    for k, (lo, hi) in enumerate(f.bounds):
        dist = np.minimum(dist, meshes[k] - lo)
        dist = np.minimum(dist, hi - meshes[k])
    if spec.mu < 0 and np.any(dist <= 0):
        raise NormSpecError("negative weight power with nodes on the boundary")
    return (dist ** spec.mu)[..., None]


def norm(f: GridFunction, spec: NormSpec) -> float:
    """Mixed (p, q)-norm of a grid function by midpoint-rule tensor quadrature."""
    vals = f.values
    if not np.all(np.isfinite(vals)):
        raise GridDataError("grid function contains non-finite values")
    w = _weight_array(f, spec)
    g = np.abs(vals) if w is None else np.abs(vals) * w
    space_axes = tuple(range(f.space_dim))
    cell = f.cell_measure
    dt = f.spacings[-1]
    if spec.order == ORDER_SPACE_TIME:
        inner = (np.sum(g ** spec.p, axis=space_axes) * cell) ** (1.0 / spec.p)
        return float((np.sum(inner ** spec.q) * dt) ** (1.0 / spec.q))
    if np.isinf(spec.q):
        inner = np.max(g, axis=-1)
    else:
        inner = (np.sum(g ** spec.q, axis=-1) * dt) ** (1.0 / spec.q)
    return float((np.sum(inner ** spec.p) * cell) ** (1.0 / spec.p))


def norm_ratio(numerators, denominator: GridFunction, spec: NormSpec,
               numerator_spec: NormSpec | None = None) -> float:
    """(sum of numerator norms) / denominator norm, +inf on a vanishing denominator."""
    if isinstance(numerators, GridFunction):
        numerators = [numerators]
    for g in numerators:
        if not g.same_lattice(denominator):
            raise GridDataError("numerator and denominator lattices differ")
    den = norm(denominator, spec)
    if den < DENOM_FLOOR:
        num_spec = numerator_spec or spec
        total = sum(norm(g, num_spec) for g in numerators)
        return 0.0 if total < DENOM_FLOOR else np.inf
    num_spec = numerator_spec or spec
    return float(sum(norm(g, num_spec) for g in numerators) / den)


# -- flat binary + JSON header dumps ------------------------------------------


def save_grid(f: GridFunction, path) -> None:
    """Write <path>.bin (little-endian float64, C order) and <path>.json."""
    path = Path(path)
    data = np.ascontiguousarray(f.values, dtype="<f8")
    path.with_suffix(".bin").write_bytes(data.tobytes())
    header = {
        "format": "parakernel-grid-v1",
        "shape": list(f.values.shape),
        "spacings": list(f.spacings),
        "offsets": list(f.offsets),
        "domain": f.domain,
        "bounds": None if f.bounds is None else [list(b) for b in f.bounds],
        "dtype": "<f8",
    }
    path.with_suffix(".json").write_text(json.dumps(header, indent=2, sort_keys=True))


def load_grid(path) -> GridFunction:
    path = Path(path)
    header = json.loads(path.with_suffix(".json").read_text())
    if header.get("format") != "parakernel-grid-v1":
        raise GridDataError(f"unrecognized grid header in {path}")
    raw = np.frombuffer(path.with_suffix(".bin").read_bytes(), dtype=header["dtype"])
    vals = raw.reshape(header["shape"]).astype(float)
    bounds = header.get("bounds")
    return GridFunction(vals, tuple(header["spacings"]), tuple(header["offsets"]),
                        domain=header["domain"],
                        bounds=None if bounds is None else tuple(tuple(b) for b in bounds))
