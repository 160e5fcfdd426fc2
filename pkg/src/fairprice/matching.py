"""Couplings with fixed group marginals: the optimal matching kernels, the
surplus-free alternative kernel, convex mixtures between them, and sampling.

Couplings are materialized atomically: the high-group distribution is
discretized into n equal-mass quantile atoms and each atom is pushed through
the regime map of the kernel. Atoms above the top cutoff split into two
points with density-ratio weights.

Randomness: sampling uses numpy's default PCG64 generator, seeded per call;
distinct seeds give independent streams, so concurrent sampling is safe.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .cutoffs import Region, classify_region, solve_eta, solve_kappa
from .dist import MarketSlice, delta, delta_inverse, gap_profile
from .errors import OutOfRange, ValidationError, WrongRegion
from .welfare import optimal_pair_price, pair_profit, surplus_closed_forms


@dataclass(frozen=True, eq=False)
class Coupling:
    """Discrete joint distribution over (low value, high value) pairs whose
    marginals approximate the two group distributions."""

    v_l: np.ndarray
    v_h: np.ndarray
    w: np.ndarray
    source: str

    def __post_init__(self):
        v_l = np.asarray(self.v_l, dtype=float)
        v_h = np.asarray(self.v_h, dtype=float)
        w = np.asarray(self.w, dtype=float)
        if not (v_l.shape == v_h.shape == w.shape) or v_l.ndim != 1:
            raise ValidationError("coupling arrays must be 1-D and equal length")
        if np.any(w < -1e-15):
            raise ValidationError("coupling weights must be nonnegative")
        if abs(w.sum() - 1.0) > 1e-9:
            raise ValidationError(f"coupling weights must sum to 1, got {w.sum()!r}")
        object.__setattr__(self, "v_l", v_l)
        object.__setattr__(self, "v_h", v_h)
        object.__setattr__(self, "w", np.maximum(w, 0.0))

    def __len__(self):
        return len(self.w)


def _quantile_atoms(slice_: MarketSlice, n: int) -> np.ndarray:
    q = (np.arange(n) + 0.5) / n
    return np.asarray(slice_.f_h.quantile(q), dtype=float)


def _split_tail(slice_, v_h, base_w, anti_map):
    """Above the top cutoff each atom splits: stay on the diagonal with the
    density-ratio weight, else map to the anti-assortative partner."""
    dl = np.asarray(slice_.f_l.pdf(v_h), dtype=float)
    dh = np.asarray(slice_.f_h.pdf(v_h), dtype=float)
    ratio = np.clip(np.where(dh > 0, dl / dh, 1.0), 0.0, 1.0)
    vl_anti = anti_map(v_h)
    vl = np.concatenate([v_h, vl_anti])
    vh = np.concatenate([v_h, v_h])
    w = np.concatenate([base_w * ratio, base_w * (1.0 - ratio)])
    return vl, vh, w


def build_rho_star(slice_: MarketSlice, n: int) -> Coupling:
    """Optimal coupling: discretize the high marginal into n equal-mass atoms
    and push each through the regime map of the slice's region."""
    if n < 10:
        raise ValidationError(f"need at least 10 atoms, got {n}")
    region = classify_region(slice_)
    v_h = _quantile_atoms(slice_, n)
    base_w = np.full(n, 1.0 / n)
    f_l, f_h = slice_.f_l, slice_.f_h
    vl_parts, vh_parts, w_parts = [], [], []

    def emit(mask, vl):
        if np.any(mask):
            vl_parts.append(np.asarray(vl, dtype=float))
            vh_parts.append(v_h[mask])
            w_parts.append(base_w[mask])

    if region is Region.C1:
        k = solve_kappa(slice_)
        d3 = float(delta(slice_, k.k3))
        d4 = float(delta(slice_, k.k4))
        d5 = float(delta(slice_, k.k5))
        m = v_h <= k.k1
        emit(m, delta_inverse(slice_, np.asarray(f_h.cdf(v_h[m])) + d3, "lower"))
        m = (v_h > k.k1) & (v_h <= k.k3)
        emit(m, f_l.quantile(np.clip(np.asarray(f_h.cdf(v_h[m])) + d3, 0.0, 1.0)))
        m = (v_h > k.k3) & (v_h <= k.k4)
        emit(m, v_h[m])
        m = (v_h > k.k4) & (v_h <= k.k5)
        emit(m, f_l.quantile(np.clip(np.asarray(f_h.cdf(v_h[m])) + d4, 0.0, 1.0)))
        tail = v_h > k.k5
        if np.any(tail):
            vl, vh, w = _split_tail(
                slice_, v_h[tail], base_w[tail],
                lambda x: f_l.quantile(np.clip(d5 - np.asarray(delta(slice_, x)), 0.0, 1.0)))
            vl_parts.append(vl)
            vh_parts.append(vh)
            w_parts.append(w)
    elif region is Region.C2:
        gp = gap_profile(slice_)
        eta = solve_eta(slice_)
        dc = float(delta(slice_, slice_.c))
        fh_eta = float(f_h.cdf(eta.eta_h))
        fl_eta = float(f_l.cdf(eta.eta_l))
        m = v_h <= eta.eta_h
        emit(m, f_l.quantile(np.asarray(f_h.cdf(v_h[m]))))
        m = (v_h > eta.eta_h) & (v_h <= slice_.c)
        emit(m, delta_inverse(slice_, np.asarray(f_h.cdf(v_h[m])) - fh_eta + dc, "lower"))
        m = (v_h > slice_.c) & (v_h <= gp.v_star)
        emit(m, v_h[m])
        tail = v_h > gp.v_star
        if np.any(tail):
            vl, vh, w = _split_tail(
                slice_, v_h[tail], base_w[tail],
                lambda x: f_l.quantile(np.clip(
                    gp.tv - np.asarray(delta(slice_, x)) + fl_eta, 0.0, 1.0)))
            vl_parts.append(vl)
            vh_parts.append(vh)
            w_parts.append(w)
    else:
        fl_c = float(f_l.cdf(slice_.c))
        m = v_h <= slice_.c
        emit(m, f_l.quantile(np.asarray(f_h.cdf(v_h[m]))))
        tail = v_h > slice_.c
        if np.any(tail):
            vl, vh, w = _split_tail(
                slice_, v_h[tail], base_w[tail],
                lambda x: f_l.quantile(np.clip(fl_c - np.asarray(delta(slice_, x)), 0.0, 1.0)))
            vl_parts.append(vl)
            vh_parts.append(vh)
            w_parts.append(w)

    vl = np.concatenate(vl_parts)
    vh = np.concatenate(vh_parts)
    w = np.concatenate(w_parts)
    keep = w > 0.0
    return Coupling(v_l=vl[keep], v_h=vh[keep], w=w[keep] / w[keep].sum(), source="rho_star")


def _j_inverse(slice_: MarketSlice, q):
    """Inverse of the spliced low-tail index: the low cdf up to the first
    cutoff, then the gap shifted by the high mass at that cutoff."""
    k = solve_kappa(slice_)
    q = np.asarray(q, dtype=float)
    fl_k1 = float(slice_.f_l.cdf(k.k1))
    fh_k1 = float(slice_.f_h.cdf(k.k1))
    low = np.asarray(slice_.f_l.quantile(np.clip(q, 0.0, 1.0)))
    high = np.asarray(delta_inverse(slice_, np.clip(q - fh_k1, 0.0, None), "lower"))
    return np.where(q <= fl_k1, low, high)


def build_rho_tilde(slice_: MarketSlice, n: int) -> Coupling:
    """Alternative optimal coupling that leaves the low group no surplus: the
    discounted band collapses onto the diagonal and the priced-out mass is
    respliced across the whole band below the third cutoff."""
    if classify_region(slice_) is not Region.C1:
        raise WrongRegion("the surplus-free kernel is defined on region C1 only")
    if n < 10:
        raise ValidationError(f"need at least 10 atoms, got {n}")
    k = solve_kappa(slice_)
    f_l, f_h = slice_.f_l, slice_.f_h
    d3 = float(delta(slice_, k.k3))
    d4 = float(delta(slice_, k.k4))
    d5 = float(delta(slice_, k.k5))
    v_h = _quantile_atoms(slice_, n)
    base_w = np.full(n, 1.0 / n)
    vl_parts, vh_parts, w_parts = [], [], []

    m = v_h <= k.k1
    if np.any(m):
        vl_parts.append(np.asarray(
            delta_inverse(slice_, np.asarray(f_h.cdf(v_h[m])) + d3, "lower"), dtype=float))
        vh_parts.append(v_h[m])
        w_parts.append(base_w[m])
    m = (v_h > k.k1) & (v_h <= k.k4)
    if np.any(m):
        vl_parts.append(v_h[m])
        vh_parts.append(v_h[m])
        w_parts.append(base_w[m])
    m = (v_h > k.k4) & (v_h <= k.k5)
    if np.any(m):
        vl_parts.append(np.asarray(
            f_l.quantile(np.clip(np.asarray(f_h.cdf(v_h[m])) + d4, 0.0, 1.0)), dtype=float))
        vh_parts.append(v_h[m])
        w_parts.append(base_w[m])
    tail = v_h > k.k5
    if np.any(tail):
        vl, vh, w = _split_tail(
            slice_, v_h[tail], base_w[tail],
            lambda x: _j_inverse(slice_, d5 - np.asarray(delta(slice_, x))))
        vl_parts.append(vl)
        vh_parts.append(vh)
        w_parts.append(w)

    vl = np.concatenate(vl_parts)
    vh = np.concatenate(vh_parts)
    w = np.concatenate(w_parts)
    keep = w > 0.0
    return Coupling(v_l=vl[keep], v_h=vh[keep], w=w[keep] / w[keep].sum(), source="rho_tilde")


def mix_for_target_surplus(slice_: MarketSlice, sigma_l: float, n: int) -> Coupling:
    """Convex mixture of the two optimal couplings hitting a target low-group
    surplus in [0, CS*]; profit and high-group surplus are unchanged."""
    cs_l_star, _ = surplus_closed_forms(slice_)
    if sigma_l < -1e-12 or sigma_l > cs_l_star * (1 + 1e-9) + 1e-12:
        raise OutOfRange(
            f"target low-group surplus {sigma_l!r} outside [0, {cs_l_star!r}]")
    t = min(max(sigma_l / cs_l_star, 0.0), 1.0) if cs_l_star > 0 else 0.0
    if t >= 1.0:
        return build_rho_star(slice_, n)
    if t <= 0.0:
        return build_rho_tilde(slice_, n)
    star = build_rho_star(slice_, n)
    tilde = build_rho_tilde(slice_, n)
    return Coupling(
        v_l=np.concatenate([star.v_l, tilde.v_l]),
        v_h=np.concatenate([star.v_h, tilde.v_h]),
        w=np.concatenate([t * star.w, (1.0 - t) * tilde.w]),
        source=f"mixture(t={t:.12g})",
    )


def coupling_welfare(slice_: MarketSlice, coupling: Coupling):
    """(profit, cs_l, cs_h) realized when every matched pair is quoted its
    optimal price."""
    price = np.asarray(optimal_pair_price(slice_, coupling.v_l, coupling.v_h))
    w = coupling.w
    profit = float(np.sum(w * np.asarray(pair_profit(slice_, coupling.v_l, coupling.v_h))))
    cs_l = float(np.sum(w * np.maximum(coupling.v_l - price, 0.0)))
    cs_h = float(np.sum(w * np.maximum(coupling.v_h - price, 0.0)))
    return profit, cs_l, cs_h


def transport_value(slice_: MarketSlice, coupling: Coupling) -> float:
    """Expected pair profit under the coupling."""
    return float(np.sum(coupling.w * np.asarray(pair_profit(slice_, coupling.v_l, coupling.v_h))))


def sample_pairs(coupling: Coupling, m: int, seed: int) -> np.ndarray:
    """m i.i.d. (v_l, v_h) draws by atom weight; deterministic given seed."""
    if m < 1:
        raise ValidationError(f"need at least one draw, got {m}")
    rng = np.random.default_rng(seed)
    idx = rng.choice(len(coupling), size=m, p=coupling.w / coupling.w.sum())
    return np.column_stack([coupling.v_l[idx], coupling.v_h[idx]])


def optimal_support_distance(slice_: MarketSlice, v_l, v_h):
    """Sup-metric distance of pairs to the six-block support set that every
    optimal coupling must live on (C1 slices); vectorized."""
    k = solve_kappa(slice_)
    lo = slice_.support_lo
    v_l = np.asarray(v_l, dtype=float)
    v_h = np.asarray(v_h, dtype=float)

    def seg_dist(x, a, b):
        return np.maximum(np.maximum(a - x, x - b), 0.0)

    cands = [
        # priced-out low mass matched into the far tail
        np.maximum(seg_dist(v_l, lo, k.k3), np.maximum(k.k5 - v_h, 0.0)),
        # discounted band: low above high
        np.maximum.reduce([seg_dist(v_l, k.k1, k.k3), seg_dist(v_h, k.k1, k.k3),
                           np.maximum(v_h - v_l, 0.0) / 2.0]),
        # low band matched with priced-out high mass
        np.maximum(seg_dist(v_l, k.k3, k.k4), seg_dist(v_h, lo, k.k1)),
        # diagonal between the third and fourth cutoffs
        np.maximum(seg_dist(v_l, k.k3, k.k4), np.abs(v_l - v_h) / 2.0),
        # discounted band: high above low
        np.maximum.reduce([seg_dist(v_l, k.k4, k.k5), seg_dist(v_h, k.k4, k.k5),
                           np.maximum(v_l - v_h, 0.0) / 2.0]),
        # diagonal above the fifth cutoff
        np.maximum.reduce([np.maximum(k.k5 - v_l, 0.0), np.maximum(k.k5 - v_h, 0.0),
                           np.abs(v_l - v_h) / 2.0]),
    ]
    out = np.minimum.reduce(cands)
    return out if out.shape else float(out)


def coupling_to_csv_rows(coupling: Coupling):
    """Rows (v_l, v_h, weight, source) for CSV serialization."""
    for vl, vh, w in zip(coupling.v_l, coupling.v_h, coupling.w):
        yield float(vl), float(vh), float(w), coupling.source
