"""Brute-force verification through discrete assignment.

Equal-mass quantile discretization turns the continuous matching problem into
an n-by-n maximum-weight assignment, solved exactly with scipy's
linear_sum_assignment (deterministic for a fixed cost matrix). The assignment
value is compared against the analytic profit; the gap decays like 1/n.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment

from .cutoffs import solve_kappa_tilde
from .dist import MarketSlice, delta, delta_inverse
from .errors import UnsupportedConfiguration, ValidationError
from .numerics import adaptive_simpson
from .pricing import build_p_star
from .welfare import pair_profit, welfare_report

MAX_ATOMS = 5000


def tilde_pair_profit(v_l, v_h):
    """Pair profit when values are noisy signals (true values uniform on
    [0, 2v]) with zero cost and equal group shares."""
    v_l = np.asarray(v_l, dtype=float)
    v_h = np.asarray(v_h, dtype=float)
    with np.errstate(invalid="ignore", divide="ignore"):
        joint = np.where(v_l + v_h > 0, v_l * v_h / (v_l + v_h), 0.0)
    out = np.maximum(np.maximum(v_l / 4.0, v_h / 4.0), joint)
    return out if out.shape else float(out)


@dataclass(frozen=True, eq=False)
class AssignmentInstance:
    v_l_atoms: np.ndarray
    v_h_atoms: np.ndarray
    cost_matrix: np.ndarray
    objective: str = "standard"

    def __post_init__(self):
        vl = np.asarray(self.v_l_atoms, dtype=float)
        vh = np.asarray(self.v_h_atoms, dtype=float)
        cm = np.asarray(self.cost_matrix, dtype=float)
        if vl.ndim != 1 or vh.ndim != 1 or cm.shape != (len(vl), len(vh)):
            raise ValidationError("cost matrix shape must match the atom vectors")
        if np.any(np.diff(vl) <= 0) or np.any(np.diff(vh) <= 0):
            raise ValidationError("atoms must be strictly increasing")
        if not np.all(np.isfinite(cm)) or np.any(cm < 0):
            raise ValidationError("cost entries must be finite and nonnegative")
        object.__setattr__(self, "v_l_atoms", vl)
        object.__setattr__(self, "v_h_atoms", vh)
        object.__setattr__(self, "cost_matrix", cm)

    @property
    def n(self) -> int:
        return len(self.v_l_atoms)


def discretize(slice_: MarketSlice, n: int, objective: str = "standard") -> AssignmentInstance:
    """Atoms at the (i - 1/2)/n quantiles of each marginal; cost matrix filled
    with the pair profit of the chosen objective."""
    if not (10 <= n <= MAX_ATOMS):
        raise ValidationError(f"atom count must lie in [10, {MAX_ATOMS}], got {n}")
    q = (np.arange(n) + 0.5) / n
    vl = np.asarray(slice_.f_l.quantile(q), dtype=float)
    vh = np.asarray(slice_.f_h.quantile(q), dtype=float)
    if objective == "standard":
        cm = np.asarray(pair_profit(slice_, vl[:, None], vh[None, :]))
    elif objective == "tilde":
        cm = np.asarray(tilde_pair_profit(vl[:, None], vh[None, :]))
    else:
        raise ValidationError(f"unknown objective {objective!r}")
    return AssignmentInstance(v_l_atoms=vl, v_h_atoms=vh, cost_matrix=cm, objective=objective)


def solve_assignment(inst: AssignmentInstance):
    """Exact maximum-weight assignment; returns (permutation, value) where
    value is the equal-mass average of the selected costs."""
    rows, cols = linear_sum_assignment(inst.cost_matrix, maximize=True)
    perm = np.empty(inst.n, dtype=int)
    perm[rows] = cols
    value = float(inst.cost_matrix[rows, cols].mean())
    return perm, value


def analytic_profit(slice_: MarketSlice) -> float:
    """Profit of the optimal rule, from the welfare integrator."""
    return welfare_report(build_p_star(slice_), slice_).profit


def oracle_gap(slice_: MarketSlice, n: int) -> float:
    """Relative gap between the assignment value and the analytic optimal
    profit; expected O(1/n) decay."""
    target = analytic_profit(slice_)
    _, value = solve_assignment(discretize(slice_, n))
    return abs(value - target) / abs(target)


def tilde_transport_value(slice_: MarketSlice) -> float:
    """Analytic value of the noisy-objective matching: integrate the pair
    profit along the regime map of the optimal noisy coupling."""
    k = solve_kappa_tilde(slice_)
    f_l, f_h = slice_.f_l, slice_.f_h
    d3 = float(delta(slice_, k.k3))
    d4 = float(delta(slice_, k.k4))
    d5 = float(delta(slice_, k.k5))
    cap = slice_.cap()

    def against_fh(vl_of_vh, a, b):
        if b <= a:
            return 0.0
        return adaptive_simpson(
            lambda vh: np.asarray(tilde_pair_profit(vl_of_vh(np.asarray(vh)), vh))
            * np.asarray(f_h.pdf(vh)), a, b, tol=1e-10)

    lo = slice_.support_lo
    total = against_fh(
        lambda vh: np.asarray(delta_inverse(slice_, np.asarray(f_h.cdf(vh)) + d3, "lower")),
        lo, k.k1)
    total += against_fh(
        lambda vh: np.asarray(f_l.quantile(np.clip(np.asarray(f_h.cdf(vh)) + d3, 0.0, 1.0))),
        k.k1, k.k3)
    total += against_fh(lambda vh: vh, k.k3, k.k4)
    total += against_fh(
        lambda vh: np.asarray(f_l.quantile(np.clip(np.asarray(f_h.cdf(vh)) + d4, 0.0, 1.0))),
        k.k4, k.k5)

    def tail(vh):
        vh = np.asarray(vh)
        dl = np.asarray(f_l.pdf(vh))
        dh = np.asarray(f_h.pdf(vh))
        anti = np.asarray(f_l.quantile(np.clip(d5 - np.asarray(delta(slice_, vh)), 0.0, 1.0)))
        return (dl * np.asarray(tilde_pair_profit(vh, vh))
                + (dh - dl) * np.asarray(tilde_pair_profit(anti, vh)))

    total += adaptive_simpson(tail, k.k5, cap, tol=1e-10)
    return float(total)


def oracle_gap_tilde(slice_: MarketSlice, n: int) -> float:
    """Relative gap for the noisy-value objective (zero cost, equal shares)."""
    if abs(slice_.c) > 1e-12 or abs(slice_.alpha - 0.5) > 1e-12:
        raise UnsupportedConfiguration(
            "noisy-value oracle is only defined for c = 0 and alpha = 1/2")
    target = tilde_transport_value(slice_)
    _, value = solve_assignment(discretize(slice_, n, objective="tilde"))
    return abs(value - target) / abs(target)


def instance_to_csv_rows(inst: AssignmentInstance, perm):
    """Debug dump: one row per matrix entry with the assignment flag."""
    perm = np.asarray(perm)
    for i in range(inst.n):
        for j in range(inst.n):
            yield (i, j, float(inst.v_l_atoms[i]), float(inst.v_h_atoms[j]),
                   float(inst.cost_matrix[i, j]), int(perm[i] == j))
