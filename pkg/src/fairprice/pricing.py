"""Piecewise pricing rules and their price-distribution pushforwards.

A rule is an ordered list of segments per group; each segment carries one of
six formula kinds. Every emitted price is clamped below at cost, so a clamped
stretch of a monotone segment shows up as an atom at cost in the pushforward
without any segment surgery: the analytic inverses route x < c to an empty
preimage and x >= c to the unclamped preimage.

Segment intervals are left-closed/right-open; the cutoff displays use mixed
weak/strict inequalities at breakpoints, which differ only on a measure-zero
set. The auxiliary randomization index is dropped from all signatures because
every constructed rule is deterministic.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .cutoffs import Region, classify_region, solve_eta, solve_kappa, solve_kappa_tilde
from .dist import TAIL_MASS, MarketSlice, delta, delta_inverse, gap_profile
from .errors import NonMonotoneSegment, OutOfRange, ValidationError

FORMULAS = (
    "identity",
    "max_with_cost",
    "constant",
    "quantile_shift",
    "delta_upper_inverse_of_complement",
    "delta_lower_inverse_shift",
)

NONDISCRIMINATION_TOL = 1e-6
PRICE_GRID = 10_001


@dataclass(frozen=True)
class Segment:
    theta: str
    v_lo: float
    v_hi: float
    formula: str
    params: tuple = ()
    tag: str = ""

    def __post_init__(self):
        if self.theta not in ("l", "h"):
            raise ValidationError(f"theta must be 'l' or 'h', got {self.theta!r}")
        if self.formula not in FORMULAS:
            raise ValidationError(f"unknown formula {self.formula!r}")
        object.__setattr__(self, "params", tuple((str(k), float(v)) for k, v in self.params))

    def param(self, key: str) -> float:
        for k, v in self.params:
            if k == key:
                return v
        raise KeyError(key)


@dataclass(frozen=True)
class PricingRule:
    name: str
    slice: MarketSlice
    segments: tuple
    notes: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "segments", tuple(self.segments))
        object.__setattr__(self, "notes", tuple(self.notes))
        for theta in ("l", "h"):
            _audit_partition(self.segments_for(theta), self.slice, theta)

    def segments_for(self, theta: str):
        return tuple(s for s in self.segments if s.theta == theta)

    def price(self, theta: str, v):
        """Price faced by a theta-consumer with value v (vectorized)."""
        v_arr = np.atleast_1d(np.asarray(v, dtype=float))
        out = np.empty_like(v_arr)
        out[:] = np.nan
        segs = self.segments_for(theta)
        for i, seg in enumerate(segs):
            mask = (v_arr >= seg.v_lo) & (v_arr < seg.v_hi)
            if i == len(segs) - 1:
                mask |= v_arr >= seg.v_hi
            if i == 0:
                mask |= v_arr < seg.v_lo
            if np.any(mask):
                out[mask] = _eval_formula(seg, self.slice, v_arr[mask])
        out = np.maximum(out, self.slice.c)
        return out if np.asarray(v).shape else float(out[0])


def _audit_partition(segments, slice_, theta):
    if not segments:
        raise ValidationError(f"no segments for theta={theta}")
    lo, hi = slice_.support_lo, slice_.support_hi
    cursor = lo
    for seg in segments:
        if abs(seg.v_lo - cursor) > 1e-9 * max(1.0, abs(cursor)):
            raise ValidationError(
                f"segments for theta={theta} leave a gap/overlap at {cursor!r} vs {seg.v_lo!r}")
        if seg.v_hi < seg.v_lo:
            raise ValidationError("segment with negative width")
        cursor = seg.v_hi
    if math.isinf(hi):
        if not math.isinf(cursor):
            raise ValidationError(f"segments for theta={theta} do not cover the unbounded support")
    elif abs(cursor - hi) > 1e-9 * max(1.0, abs(hi)):
        raise ValidationError(f"segments for theta={theta} stop at {cursor!r} before {hi!r}")


def _eval_formula(seg: Segment, slice_: MarketSlice, v):
    v = np.asarray(v, dtype=float)
    if seg.formula == "identity":
        return v
    if seg.formula == "max_with_cost":
        return np.maximum(v, slice_.c)
    if seg.formula == "constant":
        return np.full_like(v, seg.param("price"))
    if seg.formula == "quantile_shift":
        src = slice_.f_l if seg.theta == "l" else slice_.f_h
        dst = slice_.f_h if seg.theta == "l" else slice_.f_l
        q = np.clip(np.asarray(src.cdf(v)) + seg.param("offset"), 0.0, 1.0 - TAIL_MASS)
        return np.asarray(dst.quantile(q), dtype=float)
    own = slice_.f_l if seg.theta == "l" else slice_.f_h
    if seg.formula == "delta_upper_inverse_of_complement":
        level = seg.param("level")
        return np.asarray(delta_inverse(slice_, level - np.asarray(own.cdf(v)), "upper"), dtype=float)
    if seg.formula == "delta_lower_inverse_shift":
        offset = seg.param("offset")
        return np.asarray(delta_inverse(slice_, np.asarray(own.cdf(v)) + offset, "lower"), dtype=float)
    raise ValidationError(seg.formula)


def _invert_formula(seg: Segment, slice_: MarketSlice, x):
    """Largest v with price(v) <= x for a nondecreasing segment; -inf when the
    preimage is empty, +inf when it is everything."""
    x = np.asarray(x, dtype=float)
    c = slice_.c
    gp = gap_profile(slice_)
    if seg.formula in ("identity", "max_with_cost"):
        inv = x.copy()
    elif seg.formula == "quantile_shift":
        src = slice_.f_l if seg.theta == "l" else slice_.f_h
        dst = slice_.f_h if seg.theta == "l" else slice_.f_l
        q = np.asarray(dst.cdf(x)) - seg.param("offset")
        inv = np.where(q >= 1.0, np.inf,
                       np.where(q < 0.0, -np.inf,
                                np.asarray(src.quantile(np.clip(q, 0.0, 1.0 - 1e-16)))))
    elif seg.formula == "delta_upper_inverse_of_complement":
        own = slice_.f_l if seg.theta == "l" else slice_.f_h
        level = seg.param("level")
        q = level - np.asarray(delta(slice_, x))
        inv = np.where(x < gp.v_star - 1e-12, -np.inf,
                       np.where(q >= 1.0, np.inf, np.asarray(own.quantile(np.clip(q, 0.0, 1.0)))))
    elif seg.formula == "delta_lower_inverse_shift":
        own = slice_.f_l if seg.theta == "l" else slice_.f_h
        q = np.asarray(delta(slice_, x)) - seg.param("offset")
        inv = np.where(x >= gp.v_star, np.inf,
                       np.where(q < 0.0, -np.inf, np.asarray(own.quantile(np.clip(q, 0.0, 1.0)))))
    else:
        raise ValidationError(f"formula {seg.formula!r} has no monotone inverse")
    # prices are clamped at cost: below-cost queries have empty preimages
    inv = np.where(x < c - 1e-12, -np.inf, inv)
    return inv


def _check_segment_monotone(seg: Segment, slice_: MarketSlice) -> None:
    if seg.formula == "constant":
        return
    hi = min(seg.v_hi, slice_.cap())
    if hi <= seg.v_lo:
        return
    probe = np.linspace(seg.v_lo, hi, 9)
    prices = np.maximum(np.asarray(_eval_formula(seg, slice_, probe)), slice_.c)
    scale = max(1.0, float(np.max(np.abs(prices))))
    if np.any(np.diff(prices) < -1e-9 * scale):
        raise NonMonotoneSegment(
            f"segment {seg.tag or seg.formula} is not nondecreasing on [{seg.v_lo}, {seg.v_hi})")


def _segments(theta, breaks, formulas, tags, params):
    """Assemble left-closed/right-open segments, dropping empty intervals."""
    out = []
    for (a, b), formula, tag, prm in zip(zip(breaks[:-1], breaks[1:]), formulas, tags, params):
        if b <= a:
            continue
        out.append(Segment(theta=theta, v_lo=a, v_hi=b, formula=formula, params=prm, tag=tag))
    return out


def _clip_breaks(points, lo, hi):
    return [min(max(p, lo), hi) for p in points]


@lru_cache(maxsize=512)
def build_p_star(slice_: MarketSlice) -> PricingRule:
    """Profit-maximizing non-discriminatory rule, dispatched on the region."""
    region = classify_region(slice_)
    lo, hi = slice_.support_lo, slice_.support_hi
    gp = gap_profile(slice_)
    f_l, f_h = slice_.f_l, slice_.f_h
    c = slice_.c
    notes = []

    if region is Region.C1:
        k = solve_kappa(slice_)
        d5 = float(delta(slice_, k.k5))
        d4 = float(delta(slice_, k.k4))
        d3 = float(delta(slice_, k.k3))
        segs = _segments(
            "l", _clip_breaks([lo, k.k2, k.k3], lo, hi) + [hi],
            ["delta_upper_inverse_of_complement", "quantile_shift", "identity"],
            ["priced-out", "discounted-shift", "full-extraction"],
            [(("level", d5),),
             (("offset", float(f_h.cdf(k.k1)) - float(f_l.cdf(k.k2))),),
             ()],
        )
        segs += _segments(
            "h", _clip_breaks([lo, k.k1, k.k4, k.k5], lo, hi) + [hi],
            ["delta_lower_inverse_shift", "identity", "quantile_shift", "identity"],
            ["priced-out", "full-extraction", "discounted-shift", "full-extraction"],
            [(("offset", d3),), (), (("offset", d4),), ()],
        )
        if k.k2 > lo + 1e-15:
            notes.append("upper-branch gap inverse reaches the 1-1e-10 quantile cap near the "
                         "priced-out boundary")
    elif region is Region.C2:
        eta = solve_eta(slice_)
        segs = _segments(
            "l", _clip_breaks([lo, eta.eta_l, c], lo, hi) + [hi],
            ["constant", "delta_upper_inverse_of_complement", "identity"],
            ["priced-out", "priced-out-shift", "full-extraction"],
            [(("price", c),), (("level", gp.tv + float(f_l.cdf(eta.eta_l))),), ()],
        )
        segs += _segments(
            "h", _clip_breaks([lo, eta.eta_h, c], lo, hi) + [hi],
            ["constant", "delta_lower_inverse_shift", "identity"],
            ["priced-out", "priced-out-shift", "full-extraction"],
            [(("price", c),),
             (("offset", float(delta(slice_, c)) - float(f_h.cdf(eta.eta_h))),),
             ()],
        )
    else:
        split = float(f_l.quantile(float(f_h.cdf(c))))
        segs = _segments(
            "l", _clip_breaks([lo, split, c], lo, hi) + [hi],
            ["constant", "delta_upper_inverse_of_complement", "identity"],
            ["priced-out", "priced-out-shift", "full-extraction"],
            [(("price", c),), (("level", float(f_l.cdf(c))),), ()],
        )
        segs += _segments("h", [lo, hi], ["max_with_cost"], ["full-extraction"], [()])
    return PricingRule(name="p_star", slice=slice_, segments=tuple(segs), notes=tuple(notes))


@lru_cache(maxsize=512)
def build_p_ass(slice_: MarketSlice) -> PricingRule:
    """Assortative rule: equal-quantile pairs pay the lower value of the pair
    (clamped at cost)."""
    lo, hi = slice_.support_lo, slice_.support_hi
    segs = (
        Segment(theta="l", v_lo=lo, v_hi=hi, formula="max_with_cost", tag="own-value"),
        Segment(theta="h", v_lo=lo, v_hi=hi, formula="quantile_shift",
                params=(("offset", 0.0),), tag="assortative-partner-value"),
    )
    return PricingRule(name="p_ass", slice=slice_, segments=segs)


def build_p_anti(slice_: MarketSlice, q: float) -> PricingRule:
    """Partly anti-assortative rule at quantile split q: high-value low-group
    consumers are matched down by q quantiles, the rest are matched into the
    top tail and priced out."""
    if not (0.0 <= q <= 1.0):
        raise OutOfRange(f"quantile split must lie in [0, 1], got {q}")
    lo, hi = slice_.support_lo, slice_.support_hi
    vq = float(slice_.f_l.quantile(q)) if q < 1.0 else hi
    vq = min(max(vq, lo), hi)
    segs = _segments(
        "l", [lo, vq, hi],
        ["quantile_shift", "quantile_shift"],
        ["priced-out-shift", "anti-assortative-shift"],
        [(("offset", 1.0 - q),), (("offset", -q),)],
    )
    segs.append(Segment(theta="h", v_lo=lo, v_hi=hi, formula="max_with_cost", tag="own-value"))
    notes = ("low-group priced-out branch caps prices at the 1-1e-10 quantile",) if q > 0 else ()
    return PricingRule(name=f"p_anti(q={q:g})", slice=slice_, segments=tuple(segs), notes=notes)


def q_star(slice_: MarketSlice) -> float:
    """Smallest quantile split under which every matched-down low-group
    consumer purchases: the total variation distance."""
    return gap_profile(slice_).tv


@lru_cache(maxsize=128)
def build_p_tilde_star(slice_: MarketSlice) -> PricingRule:
    """Optimal rule under noisy values (uniform on [0, 2v]); same branch
    structure as the C1 rule with the noisy-variant cutoffs substituted."""
    k = solve_kappa_tilde(slice_)
    lo, hi = slice_.support_lo, slice_.support_hi
    f_l, f_h = slice_.f_l, slice_.f_h
    d5 = float(delta(slice_, k.k5))
    d4 = float(delta(slice_, k.k4))
    d3 = float(delta(slice_, k.k3))
    segs = _segments(
        "l", _clip_breaks([lo, k.k2, k.k3], lo, hi) + [hi],
        ["delta_upper_inverse_of_complement", "quantile_shift", "identity"],
        ["priced-out", "discounted-shift", "full-extraction"],
        [(("level", d5),),
         (("offset", float(f_h.cdf(k.k1)) - float(f_l.cdf(k.k2))),),
         ()],
    )
    segs += _segments(
        "h", _clip_breaks([lo, k.k1, k.k4, k.k5], lo, hi) + [hi],
        ["delta_lower_inverse_shift", "identity", "quantile_shift", "identity"],
        ["priced-out", "full-extraction", "discounted-shift", "full-extraction"],
        [(("offset", d3),), (), (("offset", d4),), ()],
    )
    return PricingRule(name="p_tilde_star", slice=slice_, segments=tuple(segs))


def build_perfect_discrimination(slice_: MarketSlice) -> PricingRule:
    """Each consumer pays their own value (clamped at cost); the benchmark a
    non-discrimination check must flag."""
    lo, hi = slice_.support_lo, slice_.support_hi
    segs = (
        Segment(theta="l", v_lo=lo, v_hi=hi, formula="max_with_cost", tag="own-value"),
        Segment(theta="h", v_lo=lo, v_hi=hi, formula="max_with_cost", tag="own-value"),
    )
    return PricingRule(name="perfect_discrimination", slice=slice_, segments=segs)


@dataclass(frozen=True)
class PriceDistribution:
    """Pushforward of a group's value distribution through a pricing rule:
    monotone segments invert analytically, constant or clamped stretches
    contribute atoms."""

    rule: PricingRule
    theta: str
    atoms: tuple

    def cdf(self, x):
        x_arr = np.atleast_1d(np.asarray(x, dtype=float))
        slice_ = self.rule.slice
        dist = slice_.f_l if self.theta == "l" else slice_.f_h
        total = np.zeros_like(x_arr)
        for seg in self.rule.segments_for(self.theta):
            mass_lo = float(dist.cdf(seg.v_lo))
            mass_hi = float(dist.cdf(seg.v_hi)) if math.isfinite(seg.v_hi) else 1.0
            if mass_hi - mass_lo <= 0.0:
                continue
            if seg.formula == "constant":
                p0 = max(seg.param("price"), slice_.c)
                total += np.where(x_arr >= p0 - 1e-12, mass_hi - mass_lo, 0.0)
            else:
                inv = _invert_formula(seg, slice_, x_arr)
                v_at = np.clip(inv, seg.v_lo, seg.v_hi)
                total += np.where(
                    np.isneginf(inv), 0.0,
                    np.where(np.isposinf(inv), mass_hi - mass_lo,
                             np.asarray(dist.cdf(v_at)) - mass_lo))
        out = np.clip(total, 0.0, 1.0)
        return out if np.asarray(x).shape else float(out[0])


def price_cdf(rule: PricingRule, slice_: MarketSlice, theta: str) -> PriceDistribution:
    """Exact piecewise pushforward of the theta-group values through the rule."""
    dist = slice_.f_l if theta == "l" else slice_.f_h
    atoms = []
    for seg in rule.segments_for(theta):
        _check_segment_monotone(seg, slice_)
        mass_lo = float(dist.cdf(seg.v_lo))
        mass_hi = float(dist.cdf(seg.v_hi)) if math.isfinite(seg.v_hi) else 1.0
        if mass_hi - mass_lo <= 0.0:
            continue
        if seg.formula == "constant":
            atoms.append((max(seg.param("price"), slice_.c), mass_hi - mass_lo))
        else:
            inv_c = float(np.asarray(_invert_formula(seg, slice_, np.asarray(slice_.c))))
            if inv_c > seg.v_lo:
                clamped = float(dist.cdf(min(inv_c, seg.v_hi))) - mass_lo
                if clamped > 1e-15:
                    atoms.append((slice_.c, clamped))
    merged = {}
    for p, m in atoms:
        merged[p] = merged.get(p, 0.0) + m
    return PriceDistribution(rule=rule, theta=theta, atoms=tuple(sorted(merged.items())))


def _price_grid(rule: PricingRule, slice_: MarketSlice, n: int = PRICE_GRID) -> np.ndarray:
    cap = slice_.cap()
    points = [slice_.c, gap_profile(slice_).v_star]
    for seg in rule.segments:
        hi_eff = min(seg.v_hi, cap)
        if hi_eff <= seg.v_lo:
            continue
        ends = np.asarray(_eval_formula(seg, slice_, np.array([seg.v_lo, hi_eff])))
        points.extend(np.maximum(ends, slice_.c).tolist())
    lo_p, hi_p = min(points), max(max(points), cap)
    grid = np.linspace(lo_p, hi_p, n)
    extra = np.asarray(points, dtype=float)
    eps = 1e-9 * max(1.0, hi_p)
    return np.unique(np.concatenate([grid, extra, extra - eps, extra + eps]))


def check_nondiscrimination(rule: PricingRule, slice_: MarketSlice) -> float:
    """Supremum over a refined price grid of the gap between the two groups'
    price cdfs; a rule passes when the gap is at most 1e-6."""
    pd_l = price_cdf(rule, slice_, "l")
    pd_h = price_cdf(rule, slice_, "h")
    grid = _price_grid(rule, slice_)
    return float(np.max(np.abs(pd_l.cdf(grid) - pd_h.cdf(grid))))


def _flip_boundary(no_sale, a: float, b: float, xtol: float = 1e-13) -> float:
    """Boundary between a no-sale stretch and a sale stretch by boolean
    bisection; robust to the price-equals-value plateaus where a signed root
    finder would stall."""
    state_a = no_sale(a)
    for _ in range(200):
        if b - a <= xtol * max(1.0, abs(b)):
            break
        mid = 0.5 * (a + b)
        if no_sale(mid) == state_a:
            a = mid
        else:
            b = mid
    return 0.5 * (a + b)


def sale_pieces(rule: PricingRule, slice_: MarketSlice, theta: str):
    """Partition each segment into maximal stretches of constant sale
    indicator (value at or above price). Pieces beyond the working cap carry
    the flag observed just below it."""
    cap = slice_.cap()
    pieces = []
    for seg in rule.segments_for(theta):
        hi_eff = min(seg.v_hi, cap)
        if hi_eff <= seg.v_lo:
            continue

        def no_sale(v, seg=seg):
            price = np.maximum(np.asarray(_eval_formula(seg, slice_, np.asarray(v))), slice_.c)
            return price - np.asarray(v) > 0

        grid = np.linspace(seg.v_lo, hi_eff, 129)
        flags = np.asarray(no_sale(grid))
        cuts = [float(seg.v_lo)]
        for a, b, fa, fb in zip(grid[:-1], grid[1:], flags[:-1], flags[1:]):
            if fa != fb:
                root = _flip_boundary(lambda v: bool(no_sale(v)), float(a), float(b))
                if root - cuts[-1] > 1e-12:
                    cuts.append(root)
        if hi_eff - cuts[-1] > 1e-12:
            cuts.append(float(hi_eff))
        else:
            cuts[-1] = float(hi_eff)
        for a, b in zip(cuts[:-1], cuts[1:]):
            mid = 0.5 * (a + b)
            pieces.append((a, b, seg, not bool(no_sale(mid))))
        if seg.v_hi > cap:
            tail_probe = cap - 1e-9 * max(cap, 1.0)
            pieces.append((cap, math.inf, seg, not bool(no_sale(tail_probe))))
    return pieces


def _joint_outcome_cdf(rule: PricingRule, slice_: MarketSlice, theta: str, x: np.ndarray):
    """P(price <= x, sale = y) per group, from the sale-piece partition.
    Detects the stronger outcome-level discrimination that the price cdf
    alone cannot see."""
    dist = slice_.f_l if theta == "l" else slice_.f_h
    out = {True: np.zeros_like(x), False: np.zeros_like(x)}
    for a, b, seg, sale in sale_pieces(rule, slice_, theta):
        mass_lo = float(dist.cdf(a))
        mass_hi = 1.0 if math.isinf(b) else float(dist.cdf(b))
        if mass_hi - mass_lo <= 0.0:
            continue
        if seg.formula == "constant":
            p0 = max(seg.param("price"), slice_.c)
            out[sale] += np.where(x >= p0 - 1e-12, mass_hi - mass_lo, 0.0)
        else:
            inv = _invert_formula(seg, slice_, x)
            v_at = np.clip(inv, a, b)
            out[sale] += np.where(
                np.isneginf(inv), 0.0,
                np.where(np.isposinf(inv), mass_hi - mass_lo,
                         np.clip(np.asarray(dist.cdf(v_at)) - mass_lo, 0.0, None)))
    return out


def check_outcome_nondiscrimination(rule: PricingRule, slice_: MarketSlice) -> float:
    """Supremum gap between the groups' joint (price, sale) distributions;
    a rule induces non-discriminatory outcomes iff this is at most 1e-6."""
    grid = _price_grid(rule, slice_)
    joint_l = _joint_outcome_cdf(rule, slice_, "l", grid)
    joint_h = _joint_outcome_cdf(rule, slice_, "h", grid)
    return float(max(np.max(np.abs(joint_l[True] - joint_h[True])),
                     np.max(np.abs(joint_l[False] - joint_h[False]))))


def rule_to_dict(rule: PricingRule) -> dict:
    """JSON-ready document: array of segments with formula and parameters.
    Unbounded interval ends serialize as null."""
    return {
        "name": rule.name,
        "cost": rule.slice.c,
        "alpha": rule.slice.alpha,
        "notes": list(rule.notes),
        "segments": [
            {
                "theta": s.theta,
                "v_lo": s.v_lo,
                "v_hi": None if math.isinf(s.v_hi) else s.v_hi,
                "formula": s.formula,
                "params": dict(s.params),
                "tag": s.tag,
            }
            for s in rule.segments
        ],
    }
