"""Polynomial factors of derivatives of anisotropic Gaussians.

For g(w) = c * exp(-(1/4) <M w, w>) every derivative is D^gamma g = P_gamma(w) g(w)
with a polynomial P_gamma obtained from the recursion

    P_0 = 1,    P_{gamma+e_i} = d/dw_i P_gamma + P_gamma * v_i,
    v_i(w) = -(1/2) (M w)_i.

Polynomials are dicts mapping exponent tuples to coefficients; evaluation is
vectorized over trailing-axis point arrays.
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np

Poly = dict


def _poly_diff(poly: Poly, i: int) -> Poly:
    out: Poly = {}
    for expo, c in poly.items():
        e = expo[i]
        if e:
            new = list(expo)
            new[i] = e - 1
            key = tuple(new)
            out[key] = out.get(key, 0.0) + c * e
    return out


def _poly_mul_linear(poly: Poly, coeffs: np.ndarray) -> Poly:
    """Multiply by the linear form sum_j coeffs[j] * w_j."""
    out: Poly = {}
    for expo, c in poly.items():
        for j, a in enumerate(coeffs):
            if a == 0.0:
                continue
            new = list(expo)
            new[j] += 1
            key = tuple(new)
            out[key] = out.get(key, 0.0) + c * a
    return out


def _poly_add(a: Poly, b: Poly) -> Poly:
    out = dict(a)
    for k, c in b.items():
        out[k] = out.get(k, 0.0) + c
    return {k: c for k, c in out.items() if c != 0.0}


def _poly_scale(poly: Poly, factor: float) -> Poly:
    return {k: c * factor for k, c in poly.items()}


@lru_cache(maxsize=4096)
def _derivative_poly_cached(m_bytes: bytes, n: int, gamma: tuple) -> tuple:
    m = np.frombuffer(m_bytes, dtype=float).reshape(n, n)
    v_rows = -0.5 * m  # v_i coefficients are row i of -(1/2) M
    poly: Poly = {(0,) * n: 1.0}
    for i, k in enumerate(gamma):
        for _ in range(k):
            poly = _poly_add(_poly_diff(poly, i), _poly_mul_linear(poly, v_rows[i]))
    return tuple(sorted(poly.items()))


def derivative_poly(m: np.ndarray, gamma: tuple) -> Poly:
    """Polynomial P_gamma for the quadratic-form matrix M (usually B^{-1})."""
    m = np.ascontiguousarray(m, dtype=float)
    n = m.shape[0]
    if len(gamma) != n:
        raise ValueError(f"multi-index length {len(gamma)} != dimension {n}")
    return dict(_derivative_poly_cached(m.tobytes(), n, tuple(int(g) for g in gamma)))


def contracted_poly(m: np.ndarray, gamma: tuple, a: np.ndarray) -> Poly:
    """sum_{ij} a[i,j] * P_{gamma + e_i + e_j}; used for time derivatives."""
    n = m.shape[0]
    out: Poly = {}
    for i in range(n):
        for j in range(n):
            if a[i, j] == 0.0:
                continue
            g = list(gamma)
            g[i] += 1
            g[j] += 1
            out = _poly_add(out, _poly_scale(derivative_poly(m, tuple(g)), float(a[i, j])))
    return out


def poly_eval(poly: Poly, w: np.ndarray) -> np.ndarray:
    """Evaluate at points w with shape (..., n)."""
    w = np.asarray(w, dtype=float)
    out = np.zeros(w.shape[:-1])
    for expo, c in poly.items():
        term = np.full(w.shape[:-1], float(c))
        for k, e in enumerate(expo):
            if e:
                term = term * w[..., k] ** e
        out = out + term
    return out


def log_abs_poly_eval(poly: Poly, w: np.ndarray) -> np.ndarray:
    """log |P(w)| with -inf at zeros, for overflow-safe bound fitting."""
    vals = poly_eval(poly, w)
    with np.errstate(divide="ignore"):
        return np.log(np.abs(vals))
