"""Adaptive panel quadrature on fixed high-order Gauss-Legendre rules.

A panel is accepted when re-integrating it as two half panels reproduces
the single-panel estimate within its share of the error budget; otherwise
the halves are queued.  Integrands take an ndarray of nodes and return an
ndarray of values, so refinement waves cost one vectorized call each.
"""

from __future__ import annotations

import math

import numpy as np

from .errors import QuadratureError

_NODES, _WEIGHTS = np.polynomial.legendre.leggauss(20)


def _panel_nodes(lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
    half = 0.5 * (hi - lo)
    mid = 0.5 * (hi + lo)
    return mid[:, None] + half[:, None] * _NODES[None, :]


def _panel_values(f, lo, hi):
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    nodes = _panel_nodes(lo, hi)
    vals = np.asarray(f(nodes.ravel()), dtype=float).reshape(nodes.shape)
    return (0.5 * (hi - lo)) * (vals @ _WEIGHTS)


def integrate(
    f,
    a: float,
    b: float,
    *,
    abs_tol: float = 1e-12,
    rel_tol: float = 1e-10,
    initial_splits=(),
    max_panels: int = 20000,
) -> tuple[float, float]:
    """Integrate a vector integrand over [a, b]; returns (value, error bound).

    `initial_splits` seeds interior breakpoints (e.g. a scale point the
    integrand is known to bend at).  Raises QuadratureError when the panel
    budget is exhausted before the local error criterion holds everywhere.
    """
    if not b > a:
        if b == a:
            return 0.0, 0.0
        raise QuadratureError(f"bad interval [{a}, {b}]")
    pts = [a] + sorted(p for p in initial_splits if a < p < b) + [b]
    lo = np.asarray(pts[:-1], dtype=float)
    hi = np.asarray(pts[1:], dtype=float)
    estimates = _panel_values(f, lo, hi)

    span = b - a
    accepted = 0.0
    err_total = 0.0
    n_panels = len(lo)
    while lo.size:
        if n_panels > max_panels:
            raise QuadratureError(
                f"no convergence within {max_panels} panels on [{a}, {b}]"
            )
        mid = 0.5 * (lo + hi)
        left = _panel_values(f, lo, mid)
        right = _panel_values(f, mid, hi)
        refined = left + right
        err = np.abs(refined - estimates)
        budget = max(abs_tol, rel_tol * (abs(accepted) + float(np.sum(np.abs(refined)))))
        ok = err <= budget * (hi - lo) / span
        accepted += float(np.sum(refined[ok]))
        err_total += float(np.sum(err[ok]))
        keep = ~ok
        lo = np.concatenate([lo[keep], mid[keep]])
        hi = np.concatenate([mid[keep], hi[keep]])
        estimates = np.concatenate([left[keep], right[keep]])
        n_panels += 2 * int(np.count_nonzero(keep))
    return accepted, err_total


def integrate_to_inf(
    f,
    a: float,
    *,
    first_width: float = 1.0,
    abs_tol: float = 1e-12,
    rel_tol: float = 1e-10,
    tail_rel: float = 1e-12,
    max_doublings: int = 60,
) -> tuple[float, float]:
    """Integrate over [a, inf) by doubling the upper limit.

    Stops once an added segment contributes less than tail_rel of the
    running total (plus abs_tol) twice in a row.
    """
    total = 0.0
    err = 0.0
    left = a
    width = first_width
    calm = 0
    for _ in range(max_doublings):
        seg, seg_err = integrate(
            f, left, left + width, abs_tol=abs_tol, rel_tol=rel_tol
        )
        total += seg
        err += seg_err
        left += width
        width *= 2.0
        if abs(seg) <= tail_rel * abs(total) + abs_tol:
            calm += 1
            if calm >= 2:
                return total, err
        else:
            calm = 0
    raise QuadratureError(f"tail did not die out after {max_doublings} doublings")


def cumulative(f, xs, *, abs_tol=1e-12, rel_tol=1e-10) -> np.ndarray:
    """Cumulative integral of f from xs[0] to each grid point (xs ascending)."""
    xs = np.asarray(xs, dtype=float)
    if xs.ndim != 1 or xs.size < 2:
        raise QuadratureError("cumulative needs an ascending grid of >= 2 points")
    if np.any(np.diff(xs) < 0.0):
        raise QuadratureError("cumulative grid must be ascending")
    pieces = np.empty(xs.size - 1)
    n = xs.size - 1
    for i in range(n):
        if xs[i + 1] > xs[i]:
            pieces[i], _ = integrate(
                f, xs[i], xs[i + 1], abs_tol=abs_tol / n, rel_tol=rel_tol
            )
        else:
            pieces[i] = 0.0
    out = np.empty_like(xs)
    out[0] = 0.0
    np.cumsum(pieces, out=out[1:])
    return out


def bracket_root(g, lo: float, hi: float, *, tol: float = 1e-12, max_iter: int = 200):
    """Bisection root of a scalar monotone-ish function on [lo, hi]."""
    glo = g(lo)
    ghi = g(hi)
    if glo == 0.0:
        return lo
    if ghi == 0.0:
        return hi
    if math.copysign(1.0, glo) == math.copysign(1.0, ghi):
        raise QuadratureError("root not bracketed")
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        gm = g(mid)
        if gm == 0.0 or 0.5 * (hi - lo) <= tol * max(1.0, abs(mid)):
            return mid
        if math.copysign(1.0, gm) == math.copysign(1.0, glo):
            lo, glo = mid, gm
        else:
            hi = mid
    return 0.5 * (lo + hi)
