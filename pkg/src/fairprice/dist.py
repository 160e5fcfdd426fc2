"""Distribution toolkit for two-group markets.

Absolutely continuous value distributions on an interval, the gap function
between the two group cdfs, its branch inverses, and the reflection maps used
by the cutoff solver. All evaluation methods accept scalars or numpy arrays.

Unbounded supports are handled by capping numerical grids and upper-branch
brackets at quantile(1 - 1e-10); in-scope integrals have exponentially
vanishing tails, so the cap is harmless at the tolerances used here.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import DegenerateSlice, OutOfRange, ValidationError
from .numerics import golden_max, invert_monotone

TAIL_MASS = 1e-10
GRID_POINTS = 10_001


class ValueDistribution:
    """Interface: cdf / pdf / quantile / partial_mean plus support bounds."""

    support_lo: float
    support_hi: float

    def cdf(self, v):
        raise NotImplementedError

    def pdf(self, v):
        raise NotImplementedError

    def quantile(self, q):
        raise NotImplementedError

    def partial_mean(self, a, b):
        """E[v * 1{a < v <= b}], exact per family."""
        raise NotImplementedError

    def cap(self) -> float:
        """Upper end of the numerical working range."""
        hi = self.support_hi
        return float(hi) if math.isfinite(hi) else float(self.quantile(1.0 - TAIL_MASS))

    def mean(self) -> float:
        return float(self.partial_mean(-math.inf, math.inf))

    def gains_above(self, c: float) -> float:
        """E[(v - c)^+], exact: partial mean above c minus c * survival."""
        c = max(float(c), 0.0)
        return float(self.partial_mean(c, math.inf)) - c * (1.0 - float(self.cdf(c)))


@dataclass(frozen=True)
class Exponential(ValueDistribution):
    mean_value: float

    def __post_init__(self):
        if not (self.mean_value > 0 and math.isfinite(self.mean_value)):
            raise ValidationError(f"exponential mean must be positive, got {self.mean_value}")

    @property
    def support_lo(self):
        return 0.0

    @property
    def support_hi(self):
        return math.inf

    def cdf(self, v):
        v = np.asarray(v, dtype=float)
        out = -np.expm1(-np.maximum(v, 0.0) / self.mean_value)
        return out if out.shape else float(out)

    def pdf(self, v):
        v = np.asarray(v, dtype=float)
        out = np.where(v < 0.0, 0.0, np.exp(-np.maximum(v, 0.0) / self.mean_value) / self.mean_value)
        return out if out.shape else float(out)

    def quantile(self, q):
        q = np.asarray(q, dtype=float)
        with np.errstate(divide="ignore"):
            out = -self.mean_value * np.log1p(-q)
        return out if out.shape else float(out)

    def partial_mean(self, a, b):
        m = self.mean_value

        def anti(x):
            x = np.maximum(np.asarray(x, dtype=float), 0.0)
            finite = np.isfinite(x)
            xf = np.where(finite, x, 0.0)
            return np.where(finite, m - (xf + m) * np.exp(-xf / m), m)

        out = anti(b) - anti(a)
        return out if out.shape else float(out)


@dataclass(frozen=True)
class ExponentialMixture(ValueDistribution):
    weights: tuple
    means: tuple

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        m = np.asarray(self.means, dtype=float)
        if w.ndim != 1 or w.shape != m.shape or len(w) == 0:
            raise ValidationError("weights and means must be equal-length nonempty sequences")
        if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-12:
            raise ValidationError("mixture weights must be nonnegative and sum to 1")
        if np.any(m <= 0):
            raise ValidationError("mixture means must be positive")
        object.__setattr__(self, "weights", tuple(float(x) for x in w))
        object.__setattr__(self, "means", tuple(float(x) for x in m))

    @property
    def support_lo(self):
        return 0.0

    @property
    def support_hi(self):
        return math.inf

    def cdf(self, v):
        v = np.asarray(v, dtype=float)[..., None]
        w = np.asarray(self.weights)
        m = np.asarray(self.means)
        out = -np.sum(w * np.expm1(-np.maximum(v, 0.0) / m), axis=-1)
        return out if out.shape else float(out)

    def pdf(self, v):
        v = np.asarray(v, dtype=float)[..., None]
        w = np.asarray(self.weights)
        m = np.asarray(self.means)
        dens = np.sum(w * np.exp(-np.maximum(v, 0.0) / m) / m, axis=-1)
        out = np.where(np.asarray(v[..., 0]) < 0.0, 0.0, dens)
        return out if out.shape else float(out)

    def quantile(self, q):
        q = np.asarray(q, dtype=float)
        # 1 - F(x) <= exp(-x / max_mean), so this bracket always covers q.
        hi = -max(self.means) * np.log1p(-np.minimum(q, 1.0 - 1e-16))
        out = invert_monotone(self.cdf, q, 0.0, np.maximum(hi, 1e-300), increasing=True)
        return out if np.asarray(out).shape else float(out)

    def partial_mean(self, a, b):
        parts = [w * Exponential(m).partial_mean(a, b) for w, m in zip(self.weights, self.means)]
        out = sum(parts)
        return out if np.asarray(out).shape else float(out)


@dataclass(frozen=True)
class ScaledFamily(ValueDistribution):
    """cdf(x) = base_cdf(x / scale); used for cost-proportional value families."""

    base: ValueDistribution
    scale: float

    def __post_init__(self):
        if not (self.scale > 0 and math.isfinite(self.scale)):
            raise ValidationError(f"scale must be positive, got {self.scale}")

    @property
    def support_lo(self):
        return self.base.support_lo * self.scale

    @property
    def support_hi(self):
        return self.base.support_hi * self.scale

    def cdf(self, v):
        return self.base.cdf(np.asarray(v, dtype=float) / self.scale)

    def pdf(self, v):
        out = np.asarray(self.base.pdf(np.asarray(v, dtype=float) / self.scale)) / self.scale
        return out if out.shape else float(out)

    def quantile(self, q):
        out = np.asarray(self.base.quantile(q)) * self.scale
        return out if out.shape else float(out)

    def partial_mean(self, a, b):
        a = np.asarray(a, dtype=float) / self.scale
        b = np.asarray(b, dtype=float) / self.scale
        out = np.asarray(self.base.partial_mean(a, b)) * self.scale
        return out if out.shape else float(out)


@dataclass(frozen=True)
class PiecewiseLinearCdf(ValueDistribution):
    """User-supplied empirical shape: cdf linear between (value, prob) knots."""

    knots: tuple

    def __post_init__(self):
        knots = tuple((float(v), float(p)) for v, p in self.knots)
        if len(knots) < 2:
            raise ValidationError("need at least two knots")
        vs = np.array([k[0] for k in knots])
        ps = np.array([k[1] for k in knots])
        if np.any(np.diff(vs) <= 0):
            raise ValidationError("knot values must be strictly increasing")
        if np.any(np.diff(ps) <= 0):
            raise ValidationError("knot probabilities must be strictly increasing (full support)")
        if abs(ps[0]) > 1e-12 or abs(ps[-1] - 1.0) > 1e-12:
            raise ValidationError("cdf must run from 0 to 1 over the knots")
        if vs[0] < 0:
            raise ValidationError("values must be nonnegative")
        object.__setattr__(self, "knots", knots)

    @property
    def support_lo(self):
        return self.knots[0][0]

    @property
    def support_hi(self):
        return self.knots[-1][0]

    def _arrays(self):
        vs = np.array([k[0] for k in self.knots])
        ps = np.array([k[1] for k in self.knots])
        return vs, ps

    def cdf(self, v):
        vs, ps = self._arrays()
        out = np.interp(np.asarray(v, dtype=float), vs, ps, left=0.0, right=1.0)
        return out if out.shape else float(out)

    def pdf(self, v):
        vs, ps = self._arrays()
        slopes = np.diff(ps) / np.diff(vs)
        v = np.asarray(v, dtype=float)
        idx = np.clip(np.searchsorted(vs, v, side="right") - 1, 0, len(slopes) - 1)
        out = np.where((v < vs[0]) | (v >= vs[-1]), 0.0, slopes[idx])
        return out if out.shape else float(out)

    def quantile(self, q):
        vs, ps = self._arrays()
        out = np.interp(np.asarray(q, dtype=float), ps, vs)
        return out if out.shape else float(out)

    def partial_mean(self, a, b):
        vs, ps = self._arrays()
        slopes = np.diff(ps) / np.diff(vs)
        a = np.asarray(a, dtype=float)
        b = np.asarray(b, dtype=float)
        lo = np.clip(np.maximum(a, vs[0]), vs[0], vs[-1])
        hi = np.clip(np.minimum(b, vs[-1]), vs[0], vs[-1])
        # sum of f_k * (y^2 - x^2)/2 over knot intervals intersected with (lo, hi]
        seg_lo = np.maximum(vs[:-1], lo[..., None])
        seg_hi = np.minimum(vs[1:], hi[..., None])
        width = np.maximum(seg_hi - seg_lo, 0.0)
        out = np.sum(slopes * width * (seg_lo + np.maximum(seg_hi, seg_lo)) / 2.0, axis=-1)
        return out if out.shape else float(out)


@dataclass(frozen=True)
class MarketSlice:
    """One cost level: cost c, high-group share alpha, and the ordered pair
    of value distributions (low group first)."""

    c: float
    alpha: float
    f_l: ValueDistribution
    f_h: ValueDistribution

    def __post_init__(self):
        if not (0.0 <= self.alpha <= 1.0):
            raise ValidationError(f"alpha must lie in [0, 1], got {self.alpha}")
        if self.c < 0:
            raise ValidationError(f"cost must be nonnegative, got {self.c}")
        _check_common_support(self.f_l, self.f_h)
        _check_likelihood_ratio_order(self.f_l, self.f_h)

    @property
    def support_lo(self):
        return self.f_l.support_lo

    @property
    def support_hi(self):
        return self.f_l.support_hi

    def cap(self) -> float:
        return max(self.f_l.cap(), self.f_h.cap())

    def grid(self, n: int = GRID_POINTS) -> np.ndarray:
        return np.linspace(self.support_lo, self.cap(), n)


@dataclass(frozen=True)
class Market:
    """Discrete cost distribution: (slice, weight) pairs with weights summing to 1."""

    slices: tuple

    def __post_init__(self):
        pairs = tuple((s, float(w)) for s, w in self.slices)
        if not pairs:
            raise ValidationError("market must contain at least one slice")
        weights = np.array([w for _, w in pairs])
        if np.any(weights < 0):
            raise ValidationError("slice weights must be nonnegative")
        if abs(weights.sum() - 1.0) > 1e-12:
            raise ValidationError(f"slice weights must sum to 1, got {weights.sum()!r}")
        object.__setattr__(self, "slices", pairs)


@dataclass(frozen=True)
class GapProfile:
    """Unique maximizer of the cdf gap and the gap's maximum (the total
    variation distance between the two group distributions)."""

    v_star: float
    tv: float


def _check_common_support(f_l: ValueDistribution, f_h: ValueDistribution) -> None:
    scale = max(1.0, abs(f_l.support_lo), f_l.cap())
    if abs(f_l.support_lo - f_h.support_lo) > 1e-9 * scale:
        raise ValidationError("group distributions must share a support interval (lower ends differ)")
    hi_l, hi_h = f_l.support_hi, f_h.support_hi
    if math.isinf(hi_l) != math.isinf(hi_h):
        raise ValidationError("group distributions must share a support interval (one is unbounded)")
    if math.isfinite(hi_l) and abs(hi_l - hi_h) > 1e-9 * scale:
        raise ValidationError("group distributions must share a support interval (upper ends differ)")


def _check_likelihood_ratio_order(f_l, f_h, n: int = GRID_POINTS, tol: float = 1e-9) -> None:
    lo = f_l.support_lo
    hi = max(f_l.cap(), f_h.cap())
    v = np.linspace(lo, hi, n)[1:-1]
    dl = np.asarray(f_l.pdf(v))
    dh = np.asarray(f_h.pdf(v))
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(dl > 0, dh / dl, np.inf)
    finite = np.isfinite(ratio)
    if not np.all(finite):
        # an infinite ratio may only appear as a terminal run
        first_inf = np.argmax(~finite)
        if np.any(finite[first_inf:]):
            raise ValidationError("likelihood-ratio order violated: low-group density vanishes internally")
        ratio = ratio[:first_inf]
    scale = np.maximum(np.abs(ratio[:-1]), 1.0)
    if np.any(np.diff(ratio) < -tol * scale):
        raise ValidationError("likelihood-ratio order violated: density ratio decreases on the support grid")


def delta(slice_: MarketSlice, v):
    """Gap between the group cdfs, F_l(v) - F_h(v); lies in [0, 1] under the
    likelihood-ratio order."""
    out = np.asarray(slice_.f_l.cdf(v)) - np.asarray(slice_.f_h.cdf(v))
    return out if out.shape else float(out)


@lru_cache(maxsize=512)
def gap_profile(slice_: MarketSlice) -> GapProfile:
    """Locate the unique gap maximizer and the total variation distance.

    The gap is quasi-concave, so a coarse grid argmax bracketed into a
    golden-section refinement pins the maximizer; this also covers piecewise
    families whose densities cross by jumping rather than through a root.
    """
    grid = slice_.grid()
    gaps = np.asarray(delta(slice_, grid))
    tv_grid = float(np.max(gaps))
    if tv_grid < 1e-12:
        raise DegenerateSlice("group distributions are numerically identical (gap below 1e-12)")
    i = int(np.argmax(gaps))
    lo = float(grid[max(i - 1, 0)])
    hi = float(grid[min(i + 1, len(grid) - 1)])
    # The gap's derivative is the density difference; bisecting its sign
    # change beats comparing near-equal gap values (and still pins jump
    # crossings of piecewise densities). Fall back to golden section when the
    # bracket does not straddle a sign change.
    s_lo = float(slice_.f_h.pdf(lo)) - float(slice_.f_l.pdf(lo))
    s_hi = float(slice_.f_h.pdf(hi)) - float(slice_.f_l.pdf(hi))
    if s_lo < 0.0 < s_hi:
        v_star = invert_monotone(
            lambda v: np.asarray(slice_.f_h.pdf(v)) - np.asarray(slice_.f_l.pdf(v)),
            0.0, lo, hi, increasing=True)
    else:
        v_star = golden_max(lambda v: delta(slice_, v), lo, hi)
    return GapProfile(v_star=float(v_star), tv=float(delta(slice_, v_star)))


def delta_inverse(slice_: MarketSlice, q, branch: str):
    """Branch inverse of the gap function.

    lower: the unique root at or below the maximizer; upper: at or above it.
    For unbounded supports the upper bracket is capped at quantile(1 - 1e-10),
    which keeps |gap(result) - q| within 1e-10 for any admissible q.
    """
    gp = gap_profile(slice_)
    q_arr = np.asarray(q, dtype=float)
    if np.any(q_arr > gp.tv + 1e-12):
        raise OutOfRange(f"gap level {np.max(q_arr)!r} exceeds the total variation {gp.tv!r}")
    if np.any(q_arr < -1e-12):
        raise OutOfRange("gap level must be nonnegative")
    q_arr = np.clip(q_arr, 0.0, gp.tv)
    if branch == "lower":
        out = invert_monotone(lambda v: delta(slice_, v), q_arr,
                              slice_.support_lo, gp.v_star, increasing=True)
    elif branch == "upper":
        # deepen the bracket past the grid cap so the residual gap at a
        # clamped root stays well inside the 1e-10 contract
        if math.isfinite(slice_.support_hi):
            hi = slice_.support_hi
        else:
            hi = max(float(slice_.f_l.quantile(1.0 - 1e-13)),
                     float(slice_.f_h.quantile(1.0 - 1e-13)))
        out = invert_monotone(lambda v: delta(slice_, v), q_arr,
                              gp.v_star, hi, increasing=False)
    else:
        raise ValidationError(f"branch must be 'lower' or 'upper', got {branch!r}")
    return out if np.asarray(out).shape else float(out)


def reflect_g_h(slice_: MarketSlice, v):
    """Reflection across the gap maximizer: g matches the gap level on the
    lower branch, h = v - g. h is nonnegative and nondecreasing on the upper
    branch."""
    gp = gap_profile(slice_)
    v_arr = np.asarray(v, dtype=float)
    if np.any(v_arr < gp.v_star - 1e-9):
        raise OutOfRange(f"reflection defined for v >= {gp.v_star!r}")
    g = delta_inverse(slice_, delta(slice_, v_arr), "lower")
    h = np.maximum(v_arr - g, 0.0)
    if np.asarray(g).shape:
        return g, h
    return float(g), float(h)
