"""Time-dependent coefficient matrices A(t) and their exact time integrals.

The canonical representation is piecewise-constant in time: a strictly
increasing breakpoint list with one symmetric n x n matrix per interval.
Named families (identity, constant anisotropic, switching diagonal) are
constructed directly in that representation; smooth time dependence can be
sampled onto a fine breakpoint grid with ``CoefficientField.from_function``.
Outside the breakpoint range the field extends with the first/last matrix,
so kernels may be queried at arbitrary times s < t.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np


class CoefficientError(ValueError):
    """Structural problem with a coefficient field (shape, symmetry, order)."""


class EllipticityError(CoefficientError):
    """Measured Rayleigh quotients violate positivity."""


class IntervalError(ValueError):
    """Time interval is empty or reversed."""


class DegenerateDiffusionError(ArithmeticError):
    """Accumulated diffusion matrix is numerically singular."""


_SYM_TOL = 1e-12


@dataclass(frozen=True)
class CoefficientField:
    """Symmetric matrix field A(t), piecewise constant on breakpoint intervals.

    ``matrices[k]`` is the value of A on (breakpoints[k], breakpoints[k+1]].
    ``nu`` is the declared ellipticity constant; it is cross-checked by
    :func:`validate_field`, not inferred here.
    """

    breakpoints: np.ndarray
    matrices: np.ndarray
    nu: float
    name: str = "custom"
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        bp = np.asarray(self.breakpoints, dtype=float)
        mats = np.asarray(self.matrices, dtype=float)
        if bp.ndim != 1 or bp.size < 2:
            raise CoefficientError("need at least one breakpoint interval")
        if np.any(np.diff(bp) <= 0):
            raise CoefficientError("breakpoints must be strictly increasing")
        if mats.ndim != 3 or mats.shape[0] != bp.size - 1 or mats.shape[1] != mats.shape[2]:
            raise CoefficientError(
                f"matrices must have shape (K, n, n) with K = len(breakpoints)-1, got {mats.shape}"
            )
        if mats.shape[1] < 1:
            raise CoefficientError("dimension must be >= 1")
        asym = np.max(np.abs(mats - np.swapaxes(mats, 1, 2)))
        scale = max(np.max(np.abs(mats)), 1.0)
        if asym > _SYM_TOL * scale:
            raise CoefficientError(f"matrices must be symmetric (max asymmetry {asym:.3e})")
        if not (self.nu > 0):
            raise CoefficientError("ellipticity constant nu must be positive")
        object.__setattr__(self, "breakpoints", bp)
        object.__setattr__(self, "matrices", 0.5 * (mats + np.swapaxes(mats, 1, 2)))
        # prefix[k] = integral of A from breakpoints[0] to breakpoints[k]
        seg = np.diff(bp)[:, None, None] * self.matrices
        prefix = np.concatenate([np.zeros((1,) + mats.shape[1:]), np.cumsum(seg, axis=0)])
        object.__setattr__(self, "_prefix", prefix)

    # -- constructors ------------------------------------------------------

    @classmethod
    def identity(cls, n: int, t_max: float = 8.0) -> "CoefficientField":
        return cls(np.array([0.0, t_max]), np.eye(n)[None, :, :].copy(), nu=1.0, name="identity")

    @classmethod
    def constant(cls, matrix, nu: float | None = None, t_max: float = 8.0,
                 name: str = "constant") -> "CoefficientField":
        m = np.atleast_2d(np.asarray(matrix, dtype=float))
        if nu is None:
            eigs = np.linalg.eigvalsh(0.5 * (m + m.T))
            if eigs[0] <= 0:
                raise EllipticityError("constant matrix is not positive definite")
            nu = float(min(eigs[0], 1.0 / eigs[-1]))
        return cls(np.array([0.0, t_max]), m[None, :, :], nu=nu, name=name)

    @classmethod
    def switching(cls, n: int, nu: float = 0.5, switches: int = 8,
                  t_max: float = 2.0) -> "CoefficientField":
        """Diagonal field alternating between nu and 1/nu on uniform slots.

        ``switches`` interior jumps give switches+1 slots on [0, t_max]; axis i
        is phase-shifted by i slots so no two axes switch in unison (n > 1).
        """
        if switches < 1:
            raise CoefficientError("need at least one switch")
        slots = switches + 1
        bp = np.linspace(0.0, t_max, slots + 1)
        mats = np.empty((slots, n, n))
        for k in range(slots):
            diag = [nu if (k + i) % 2 == 0 else 1.0 / nu for i in range(n)]
            mats[k] = np.diag(diag)
        return cls(bp, mats, nu=nu, name=f"switching{switches}")

    @classmethod
    def from_function(cls, fn: Callable[[float], np.ndarray], n: int, nu: float,
                      t_max: float, per_unit: int = 1024,
                      name: str = "sampled") -> "CoefficientField":
        """Sample a time-dependent matrix function onto a fine breakpoint grid.

        Midpoint sampling with ``per_unit`` intervals per unit time; accumulate
        is then exact for the stored representation.
        """
        k = max(1, int(np.ceil(per_unit * t_max)))
        bp = np.linspace(0.0, t_max, k + 1)
        mid = 0.5 * (bp[:-1] + bp[1:])
        mats = np.stack([np.atleast_2d(np.asarray(fn(t), dtype=float)) for t in mid])
        if mats.shape[1:] != (n, n):
            raise CoefficientError(f"fn must return ({n},{n}) matrices")
        return cls(bp, mats, nu=nu, name=name)

    # -- queries -----------------------------------------------------------

    @property
    def dimension(self) -> int:
        return self.matrices.shape[1]

    def matrix_at(self, t: float) -> np.ndarray:
        """A(t) with the left-interval convention: t in (tau_k, tau_{k+1}] -> A_k."""
        idx = int(np.searchsorted(self.breakpoints, t, side="left")) - 1
        idx = min(max(idx, 0), self.matrices.shape[0] - 1)
        return self.matrices[idx]

    def _antiderivative(self, t: float) -> np.ndarray:
        bp = self.breakpoints
        if t <= bp[0]:
            return (t - bp[0]) * self.matrices[0]
        if t >= bp[-1]:
            return self._prefix[-1] + (t - bp[-1]) * self.matrices[-1]
        k = int(np.searchsorted(bp, t, side="left")) - 1
        return self._prefix[k] + (t - bp[k]) * self.matrices[k]

    def integral(self, s: float, t: float) -> np.ndarray:
        """Exact piecewise integral of A over (s, t)."""
        return self._antiderivative(t) - self._antiderivative(s)

    @property
    def reflection_compatible(self) -> bool:
        """True when a^{in} = 0 for all i != n, the method-of-images condition."""
        n = self.dimension
        if n == 1:
            return True
        off = self.matrices[:, :-1, -1]
        scale = max(np.max(np.abs(self.matrices)), 1.0)
        return bool(np.max(np.abs(off)) <= _SYM_TOL * scale)


@dataclass(frozen=True)
class AccumulatedDiffusion:
    """B = integral of A over (s, t), with determinant and inverse."""

    matrix: np.ndarray
    det: float
    inverse: np.ndarray
    interval: tuple[float, float]

    @property
    def elapsed(self) -> float:
        return self.interval[1] - self.interval[0]


@dataclass(frozen=True)
class EllipticityReport:
    """Measured Rayleigh-quotient range over a time sweep."""

    lower: float
    upper: float
    nu: float
    samples: int
    passed: bool


def validate_field(field_: CoefficientField, samples: int = 256) -> EllipticityReport:
    """Sweep eigenvalues of A(t) and check them against [nu, 1/nu].

    Sample times are interval midpoints plus a uniform sweep. Raises
    :class:`EllipticityError` when the measured lower bound is nonpositive;
    otherwise returns a report whose ``passed`` flag states whether the
    measured range sits inside [nu, 1/nu] up to 1e-12 relative slack.
    """
    bp = field_.breakpoints
    mids = 0.5 * (bp[:-1] + bp[1:])
    uniform = np.linspace(bp[0], bp[-1], max(samples, 2))
    times = np.unique(np.concatenate([mids, uniform]))
    lo, hi = np.inf, -np.inf
    for t in times:
        eigs = np.linalg.eigvalsh(field_.matrix_at(t))
        lo = min(lo, eigs[0])
        hi = max(hi, eigs[-1])
    if lo <= 0:
        raise EllipticityError(f"measured lower ellipticity bound {lo:.3e} is not positive")
    rtol = 1e-12
    passed = bool(lo >= field_.nu * (1 - rtol) and hi <= (1.0 / field_.nu) * (1 + rtol))
    return EllipticityReport(lower=float(lo), upper=float(hi), nu=field_.nu,
                             samples=times.size, passed=passed)


def accumulate(field_: CoefficientField, s: float, t: float) -> AccumulatedDiffusion:
    """Accumulated diffusion B(t, s) with determinant and inverse, exact in time.

    Cached per field instance; kernels query repeated (s, t) pairs heavily.
    """
    if not t > s:
        raise IntervalError(f"need t > s, got s={s}, t={t}")
    key = (float(s), float(t))
    hit = field_._cache.get(key)
    if hit is not None:
        return hit
    b = field_.integral(s, t)
    det = float(np.linalg.det(b))
    scale = (field_.nu * (t - s)) ** field_.dimension
    # relative floor catches broken matrices, absolute floor catches underflow
    # that would make det^{-1/2} or the inverse unusable downstream
    if not np.isfinite(det) or det < max(1e-30 * scale, 1e-290):
        raise DegenerateDiffusionError(
            f"accumulated diffusion is numerically singular: det={det:.3e} over ({s}, {t})"
        )
    inv = np.linalg.inv(b)
    acc = AccumulatedDiffusion(matrix=b, det=det, inverse=0.5 * (inv + inv.T),
                               interval=(float(s), float(t)))
    if len(field_._cache) < 65536:
        field_._cache[key] = acc
    return acc
