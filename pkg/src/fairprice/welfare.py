"""Pair-level profits and rule-level welfare accounting.

Consumer surplus and welfare loss are group-conditional means; the report's
accounting identity
    profit + (1-alpha)(cs_l + wl_l) + alpha(cs_h + wl_h) = gains from trade
holds exactly for rules that never price below cost (all constructed rules).

Integration strategy: pieces with affine prices (identity, cost-clamped,
constant) are integrated in closed form through exact partial moments; only
quantile-shift and gap-inverse pieces go through adaptive Simpson quadrature
(tolerance 1e-10 per segment).
"""

from __future__ import annotations

import math
from collections import namedtuple
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .cutoffs import Region, classify_region, solve_kappa
from .dist import Market, MarketSlice, delta
from .errors import ConsistencyError, UnsupportedConfiguration, ValidationError, ZeroGains
from .numerics import adaptive_simpson, golden_max
from .pricing import PricingRule, _eval_formula, sale_pieces

QUAD_TOL = 1e-10
CLOSED_FORM_RTOL = 1e-6


def pair_profit(slice_: MarketSlice, v_l, v_h):
    """Best profit from a matched pair: sell to both at the lower value, or to
    one group alone at its value; never negative."""
    v_l = np.asarray(v_l, dtype=float)
    v_h = np.asarray(v_h, dtype=float)
    alpha, c = slice_.alpha, slice_.c
    both = np.minimum(v_l, v_h) - c
    only_h = alpha * np.maximum(v_h - c, 0.0)
    only_l = (1.0 - alpha) * np.maximum(v_l - c, 0.0)
    out = np.maximum(np.maximum(both, only_h), only_l)
    out = np.maximum(out, 0.0)
    return out if out.shape else float(out)


def optimal_pair_price(slice_: MarketSlice, v_l, v_h):
    """Profit-maximizing price for a matched pair, restricted to the pair's
    values and clamped below by feasibility; ties resolve toward selling to
    both (the lower value)."""
    v_l = np.asarray(v_l, dtype=float)
    v_h = np.asarray(v_h, dtype=float)
    alpha, c = slice_.alpha, slice_.c
    lo = np.minimum(v_l, v_h)
    hi = np.maximum(v_l, v_h)

    def profit_at(p):
        sale_l = v_l >= p
        sale_h = v_h >= p
        raw = (p - c) * ((1.0 - alpha) * sale_l + alpha * sale_h)
        return np.where(p >= c, raw, -np.inf)

    pi_lo = profit_at(lo)
    pi_hi = profit_at(hi)
    best = np.maximum(pi_lo, pi_hi)
    price = np.where(pi_lo >= pi_hi, lo, hi)
    price = np.where(best > 0.0, price, np.where(best == 0.0, price, c))
    # when no candidate is feasible (both values below cost) quote cost: no trade
    price = np.where(np.isneginf(best), c, price)
    return price if price.shape else float(price)


@dataclass(frozen=True)
class WelfareReport:
    c: float
    alpha: float
    region: str
    profit: float
    cs_l: float
    cs_h: float
    wl_l: float
    wl_h: float
    gains: float

    @property
    def share(self) -> float:
        return self.profit / self.gains if self.gains > 0 else math.nan

    def accounting_residual(self) -> float:
        a = self.alpha
        return (self.profit + (1 - a) * (self.cs_l + self.wl_l)
                + a * (self.cs_h + self.wl_h) - self.gains)


def _partial_gains(dist, c: float, a: float, b: float) -> float:
    """E[(v - c)^+ 1{a < v <= b}], exact."""
    lo = max(a, c)
    if b <= lo:
        return 0.0
    cdf_b = 1.0 if math.isinf(b) else float(dist.cdf(b))
    return float(dist.partial_mean(lo, b)) - c * (cdf_b - float(dist.cdf(lo)))


def _piece_welfare(slice_, theta, piece):
    """(cs, profit) contribution of one sale piece; wl pieces are handled by
    the caller through exact partial gains."""
    a, b, seg, _ = piece
    dist = slice_.f_l if theta == "l" else slice_.f_h
    c = slice_.c
    if seg.formula in ("identity", "max_with_cost"):
        return 0.0, _partial_gains(dist, c, a, b)
    if seg.formula == "constant":
        p0 = max(seg.param("price"), c)
        mass = (1.0 if math.isinf(b) else float(dist.cdf(b))) - float(dist.cdf(a))
        return float(dist.partial_mean(a, b)) - p0 * mass, (p0 - c) * mass
    if math.isinf(b):
        # beyond the working cap the price is flat to first order
        cap = slice_.cap()
        p_tail = max(float(np.asarray(_eval_formula(seg, slice_, np.asarray(cap)))), c)
        mass = 1.0 - float(dist.cdf(cap))
        cs = float(dist.partial_mean(cap, math.inf)) - p_tail * mass
        return max(cs, 0.0), (p_tail - c) * mass

    def price(v):
        return np.maximum(np.asarray(_eval_formula(seg, slice_, np.asarray(v))), c)

    cs = adaptive_simpson(
        lambda v: (np.asarray(v) - price(v)) * np.asarray(dist.pdf(v)), a, b, tol=QUAD_TOL)
    profit = adaptive_simpson(
        lambda v: (price(v) - c) * np.asarray(dist.pdf(v)), a, b, tol=QUAD_TOL)
    return cs, profit


@lru_cache(maxsize=512)
def welfare_report(rule: PricingRule, slice_: MarketSlice) -> WelfareReport:
    """Per-slice profit, consumer surplus, and welfare loss under a rule.

    For the optimal rule on a C1 slice the surplus numbers are additionally
    checked against the closed quantile-integral forms; disagreement beyond
    1e-6 relative raises ConsistencyError.
    """
    region = classify_region(slice_)
    out = {}
    for theta in ("l", "h"):
        dist = slice_.f_l if theta == "l" else slice_.f_h
        cs = profit = wl = 0.0
        for piece in sale_pieces(rule, slice_, theta):
            a, b, _, sale = piece
            if sale:
                dcs, dprofit = _piece_welfare(slice_, theta, piece)
                cs += dcs
                profit += dprofit
            else:
                wl += _partial_gains(dist, slice_.c, a, b)
        out[theta] = (max(cs, 0.0), profit, wl)
    alpha = slice_.alpha
    gains_l = slice_.f_l.gains_above(slice_.c)
    gains_h = slice_.f_h.gains_above(slice_.c)
    report = WelfareReport(
        c=slice_.c,
        alpha=alpha,
        region=region.value,
        profit=(1 - alpha) * out["l"][1] + alpha * out["h"][1],
        cs_l=out["l"][0],
        cs_h=out["h"][0],
        wl_l=out["l"][2],
        wl_h=out["h"][2],
        gains=(1 - alpha) * gains_l + alpha * gains_h,
    )
    if rule.name == "p_star" and region is Region.C1:
        cf_l, cf_h = surplus_closed_forms(slice_)
        for got, want, label in ((report.cs_l, cf_l, "low"), (report.cs_h, cf_h, "high")):
            if abs(got - want) > CLOSED_FORM_RTOL * max(abs(want), 1e-9):
                raise ConsistencyError(
                    f"{label}-group surplus disagrees with its closed form: "
                    f"integrated {got!r} vs closed {want!r}")
    return report


@lru_cache(maxsize=512)
def surplus_closed_forms(slice_: MarketSlice):
    """Quantile-integral surplus of the optimal rule on a C1 slice.

    Low group: over the discounted band, own quantile minus the matched
    partner quantile shifted down by the gap at the third cutoff. High group:
    over its discounted band, own quantile minus the partner quantile shifted
    up by the gap at the fourth cutoff.
    """
    k = solve_kappa(slice_)
    f_l, f_h = slice_.f_l, slice_.f_h
    d3 = float(delta(slice_, k.k3))
    d4 = float(delta(slice_, k.k4))

    cs_l = adaptive_simpson(
        lambda q: np.asarray(f_l.quantile(q)) - np.asarray(f_h.quantile(np.clip(np.asarray(q) - d3, 0.0, 1.0))),
        float(f_l.cdf(k.k2)), float(f_l.cdf(k.k3)), tol=QUAD_TOL)
    cs_h = adaptive_simpson(
        lambda q: np.asarray(f_h.quantile(q)) - np.asarray(f_l.quantile(np.clip(np.asarray(q) + d4, 0.0, 1.0))),
        float(f_h.cdf(k.k4)), float(f_h.cdf(k.k5)), tol=QUAD_TOL)
    return float(cs_l), float(cs_h)


ShareBound = namedtuple("ShareBound", ["bound", "weak_bound", "r"])


def profit_share_bound(slice_: MarketSlice) -> ShareBound:
    """Distribution-free lower bound on the profit share of total gains,
    driven only by the ratio of group gains from trade and the group shares."""
    gains_l = slice_.f_l.gains_above(slice_.c)
    gains_h = slice_.f_h.gains_above(slice_.c)
    if gains_l <= 1e-15:
        raise ZeroGains("low-group gains from trade vanish; the ratio bound is undefined")
    r = gains_h / gains_l - 1.0
    return ShareBound(bound=_bound_from_r(r, slice_.alpha), weak_bound=_weak_bound_from_r(r), r=r)


def _bound_from_r(r: float, alpha: float) -> float:
    return max(1.0, alpha * (r + 1.0)) / (alpha * r + 1.0)


def _weak_bound_from_r(r: float) -> float:
    return (r + 1.0) / (2.0 * r + 1.0)


def _as_weighted_slices(market_or_slice):
    if isinstance(market_or_slice, MarketSlice):
        return ((market_or_slice, 1.0),)
    if isinstance(market_or_slice, Market):
        return market_or_slice.slices
    raise ValidationError("expected a MarketSlice or a Market")


def uniform_price_revenue(market_or_slice):
    """Best single posted price across the market: maximizes the weighted sum
    of (p - c) times survival of the group mixture, by refined grid search
    plus local golden-section polish. Returns (price, revenue)."""
    pairs = _as_weighted_slices(market_or_slice)

    def revenue(p):
        p = np.asarray(p, dtype=float)
        total = np.zeros_like(p)
        for s, w in pairs:
            mix = s.alpha * np.asarray(s.f_h.cdf(p)) + (1 - s.alpha) * np.asarray(s.f_l.cdf(p))
            total += w * (p - s.c) * (1.0 - mix)
        return total

    lo = min(s.support_lo for s, _ in pairs)
    hi = max(s.cap() for s, _ in pairs)
    grid = np.linspace(lo, hi, 4001)
    vals = revenue(grid)
    i = int(np.argmax(vals))
    a = grid[max(i - 1, 0)]
    b = grid[min(i + 1, len(grid) - 1)]
    p_best = golden_max(lambda p: float(revenue(np.asarray(p))), float(a), float(b))
    return float(p_best), float(revenue(np.asarray(p_best)))


def bbm_triangle(market: Market):
    """Vertices of the zero-cost surplus triangle spanned by segmentation:
    (full extraction, 0), (uniform revenue, 0), (uniform revenue, rest)."""
    for s, _ in market.slices:
        if abs(s.c) > 1e-12:
            raise UnsupportedConfiguration("surplus triangle is stated for zero-cost markets")
    ev = sum(w * (s.alpha * s.f_h.mean() + (1 - s.alpha) * s.f_l.mean())
             for s, w in market.slices)
    _, r_star = uniform_price_revenue(market)
    return ((ev, 0.0), (r_star, 0.0), (r_star, ev - r_star))


def aggregate_reports(market: Market, reports) -> dict:
    """Weight per-slice reports by the market's cost weights."""
    reports = list(reports)
    if len(reports) != len(market.slices):
        raise ValidationError("need one report per market slice")
    keys = ("profit", "cs_l", "cs_h", "wl_l", "wl_h", "gains")
    agg = {k: 0.0 for k in keys}
    for (slice_, w), rep in zip(market.slices, reports):
        for k in keys:
            agg[k] += w * getattr(rep, k)
    agg["share"] = agg["profit"] / agg["gains"] if agg["gains"] > 0 else math.nan
    return agg
