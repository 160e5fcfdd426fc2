"""Root finding and quadrature primitives shared across the library.

All target functions here are monotone on the chosen bracket, so plain
bisection is used throughout: absolute tolerance 1e-12 on the argument,
200-iteration cap. The vector variants run the same loop on numpy arrays.
"""

from __future__ import annotations

import numpy as np

from .errors import NoConvergence

XTOL = 1e-12
MAX_ITER = 200


def bisect(f, lo: float, hi: float, *, xtol: float = XTOL, max_iter: int = MAX_ITER) -> float:
    """Root of f on [lo, hi]; f(lo) and f(hi) must not have the same strict sign."""
    flo = f(lo)
    if flo == 0.0:
        return lo
    fhi = f(hi)
    if fhi == 0.0:
        return hi
    if (flo > 0) == (fhi > 0):
        raise NoConvergence(
            "bisection bracket does not straddle a root",
            lo=lo, hi=hi, f_lo=flo, f_hi=fhi,
        )
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        if hi - lo <= xtol:
            return mid
        fm = f(mid)
        if fm == 0.0:
            return mid
        if (fm > 0) == (flo > 0):
            lo, flo = mid, fm
        else:
            hi = mid
    return 0.5 * (lo + hi)


def invert_monotone(f, targets, lo, hi, *, increasing: bool = True,
                    xtol: float = XTOL, max_iter: int = MAX_ITER):
    """Solve f(x) = t elementwise for monotone f; targets/lo/hi broadcast.

    Out-of-bracket targets clamp to the nearer endpoint, which is the
    behaviour the Delta-inverse callers rely on for vanishing tails.
    """
    t = np.asarray(targets, dtype=float)
    a = np.broadcast_to(np.asarray(lo, dtype=float), t.shape).copy()
    b = np.broadcast_to(np.asarray(hi, dtype=float), t.shape).copy()
    for _ in range(max_iter):
        if np.max(b - a) <= xtol:
            break
        mid = 0.5 * (a + b)
        fm = np.asarray(f(mid), dtype=float)
        below = (fm < t) if increasing else (fm > t)
        a = np.where(below, mid, a)
        b = np.where(below, b, mid)
    out = 0.5 * (a + b)
    return out if out.shape else float(out)


def golden_max(f, lo: float, hi: float, *, xtol: float = XTOL, max_iter: int = MAX_ITER) -> float:
    """Argmax of a quasi-concave f on [lo, hi] by golden-section search."""
    invphi = (np.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    x1 = b - invphi * (b - a)
    x2 = a + invphi * (b - a)
    f1, f2 = f(x1), f(x2)
    for _ in range(max_iter):
        if b - a <= xtol:
            break
        if f1 < f2:
            a, x1, f1 = x1, x2, f2
            x2 = a + invphi * (b - a)
            f2 = f(x2)
        else:
            b, x2, f2 = x2, x1, f1
            x1 = b - invphi * (b - a)
            f1 = f(x1)
    return 0.5 * (a + b)


def adaptive_simpson(f, a: float, b: float, *, tol: float = 1e-10, max_depth: int = 48) -> float:
    """Adaptive Simpson quadrature of a vectorized integrand on [a, b].

    Keeps a worklist of intervals and evaluates every pending midpoint in one
    vectorized call per level, so smooth integrands cost a handful of array
    evaluations even at tight tolerances.
    """
    if b <= a:
        return 0.0
    xs = np.array([a, 0.5 * (a + b), b])
    fa, fm, fb = np.asarray(f(xs), dtype=float)
    s0 = (b - a) / 6.0 * (fa + 4.0 * fm + fb)
    # per-interval state: lo, hi, f(lo), f(mid), f(hi), simpson, tol
    state = np.array([[a, b, fa, fm, fb, s0, tol]])
    total = 0.0
    for depth in range(max_depth):
        lo, hi = state[:, 0], state[:, 1]
        flo, fmid, fhi = state[:, 2], state[:, 3], state[:, 4]
        s_whole, tols = state[:, 5], state[:, 6]
        m = 0.5 * (lo + hi)
        lm = 0.5 * (lo + m)
        rm = 0.5 * (m + hi)
        fl = np.asarray(f(lm), dtype=float)
        fr = np.asarray(f(rm), dtype=float)
        s_left = (m - lo) / 6.0 * (flo + 4.0 * fl + fmid)
        s_right = (hi - m) / 6.0 * (fmid + 4.0 * fr + fhi)
        err = s_left + s_right - s_whole
        done = np.abs(err) <= 15.0 * tols
        if depth == max_depth - 1:
            done = np.ones_like(done)
        total += float(np.sum((s_left + s_right + err / 15.0)[done]))
        keep = ~done
        if not np.any(keep):
            return total
        half = tols[keep] / 2.0
        left = np.column_stack([lo[keep], m[keep], flo[keep], fl[keep], fmid[keep], s_left[keep], half])
        right = np.column_stack([m[keep], hi[keep], fmid[keep], fr[keep], fhi[keep], s_right[keep], half])
        state = np.vstack([left, right])
    return total
