"""Cost-region classification and the cutoff systems.

A slice falls into one of three regions depending on whether the low-group
cdf at cost stays below the total variation distance between the groups, and
on which side of the gap maximizer the cost sits. Region C1 admits a
five-cutoff vector pinned by a one-dimensional fixed point; C2 admits a pair
of exclusion thresholds; C2/C3 both allow full surplus extraction.

The imperfect-observation variant (noisy willingness-to-pay, uniform on
[0, 2v]) replaces the linear value equations with quadratic-integral ones and
is solved for the zero-cost, equal-shares specialization only.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .dist import MarketSlice, delta, gap_profile, reflect_g_h
from .errors import NoConvergence, UnsupportedConfiguration, WrongRegion
from .numerics import adaptive_simpson, bisect

KAPPA_TOL = 1e-8
KAPPA_TILDE_TOL = 1e-7
QUAD_TOL = 1e-10


class Region(enum.Enum):
    C1 = "C1"
    C2 = "C2"
    C3 = "C3"


@dataclass(frozen=True)
class Kappa:
    """Five-cutoff vector with the residuals of its defining equalities."""

    k1: float
    k2: float
    k3: float
    k4: float
    k5: float
    residuals: tuple
    variant: str = "standard"

    def as_tuple(self):
        return (self.k1, self.k2, self.k3, self.k4, self.k5)

    @property
    def max_residual(self) -> float:
        return max(abs(r) for r in self.residuals)


@dataclass(frozen=True)
class Eta:
    """Exclusion thresholds for region C2: eta_l <= eta_h <= c."""

    eta_l: float
    eta_h: float


def classify_region(slice_: MarketSlice) -> Region:
    """C1 when F_l(c) < tv; otherwise C2 below the gap maximizer, C3 at or
    above it. Ties F_l(c) = tv classify as C2/C3 (weak inequality)."""
    gp = gap_profile(slice_)
    if float(slice_.f_l.cdf(slice_.c)) < gp.tv:
        return Region.C1
    return Region.C2 if slice_.c < gp.v_star else Region.C3


def _h_of(slice_: MarketSlice, v: float) -> float:
    _, h = reflect_g_h(slice_, v)
    return h


def fixed_point_residual(slice_: MarketSlice, k5):
    """Residual of the scalar equation pinning the top cutoff; vectorized.

    Positive at the lower bracket end and negative at the upper one, with a
    single sign change on the admissible interval.
    """
    alpha = slice_.alpha
    c = slice_.c
    g, h = reflect_g_h(slice_, k5)
    inner = alpha / (1.0 - alpha) * np.asarray(h) + c
    out = (np.asarray(delta(slice_, k5))
           - np.asarray(delta(slice_, inner))
           - np.asarray(slice_.f_h.cdf(alpha * np.asarray(h) + c)))
    return out if np.asarray(out).shape else float(out)


@lru_cache(maxsize=512)
def kappa_bracket(slice_: MarketSlice):
    """The interval [v_hat, v_tilde] on which the top-cutoff fixed point has
    exactly one root: the upper end exhausts the low-group margin at the gap
    maximizer, the lower end is the infimum where the reflected spread covers
    the support floor."""
    alpha, c = slice_.alpha, slice_.c
    gp = gap_profile(slice_)
    lo_v = slice_.support_lo

    target_tilde = (1.0 - alpha) * (gp.v_star - c)
    hi = max(2.0 * gp.v_star - lo_v, gp.v_star + 1.0)
    for _ in range(200):
        if alpha * _h_of(slice_, hi) >= target_tilde:
            break
        hi = lo_v + 2.0 * (hi - lo_v)
    else:
        raise NoConvergence("could not bracket the tilde end of the k5 interval",
                            hi=hi, target=target_tilde)
    v_tilde = bisect(lambda v: alpha * _h_of(slice_, v) - target_tilde, gp.v_star, hi)

    target_hat = (1.0 - alpha) * (lo_v - c)
    if alpha * _h_of(slice_, gp.v_star) >= target_hat:
        v_hat = gp.v_star
    else:
        v_hat = bisect(lambda v: alpha * _h_of(slice_, v) - target_hat, gp.v_star, v_tilde)
    return v_hat, v_tilde


@lru_cache(maxsize=512)
def solve_kappa(slice_: MarketSlice) -> Kappa:
    """Solve the five-cutoff system on a C1 slice.

    Constructive route: find the tilde bracket end where the reflected spread
    exhausts the low-group margin, take the hat end from the infimum
    condition, bisect the fixed point for k5, then read off the remaining
    cutoffs from the system equalities.
    """
    region = classify_region(slice_)
    if region is not Region.C1:
        raise WrongRegion(f"cutoff system requires region C1, slice is {region.value}")
    alpha, c = slice_.alpha, slice_.c
    if not (0.0 < alpha < 1.0):
        raise UnsupportedConfiguration("cutoff system needs both groups present (0 < alpha < 1)")
    v_hat, v_tilde = kappa_bracket(slice_)

    r_lo = fixed_point_residual(slice_, v_hat)
    r_hi = fixed_point_residual(slice_, v_tilde)
    if r_lo < -KAPPA_TOL or r_hi > KAPPA_TOL:
        raise NoConvergence("fixed-point bracket has the wrong signs",
                            lo=v_hat, hi=v_tilde, f_lo=r_lo, f_hi=r_hi)
    if r_lo <= 0.0:
        k5 = v_hat  # boundary root (narrow-support configurations)
    elif r_hi >= 0.0:
        k5 = v_tilde
    else:
        k5 = bisect(lambda v: fixed_point_residual(slice_, v), v_hat, v_tilde)

    g5, h5 = reflect_g_h(slice_, k5)
    k4 = g5
    k1 = alpha * h5 + c
    k3 = alpha / (1.0 - alpha) * h5 + c
    k2 = float(slice_.f_l.quantile(np.clip(delta(slice_, k5), 0.0, 1.0)))
    kappa = Kappa(k1=k1, k2=k2, k3=k3, k4=k4, k5=k5,
                  residuals=_standard_residuals(slice_, k1, k2, k3, k4, k5))
    if kappa.max_residual > KAPPA_TOL:
        raise NoConvergence("cutoff residuals exceed tolerance after bisection",
                            residuals=kappa.residuals, kappa=kappa.as_tuple())
    return kappa


def _standard_residuals(slice_, k1, k2, k3, k4, k5):
    fl_k2 = float(slice_.f_l.cdf(k2))
    alpha, c = slice_.alpha, slice_.c
    return (
        fl_k2 - float(delta(slice_, k3)) - float(slice_.f_h.cdf(k1)),
        fl_k2 - float(delta(slice_, k4)),
        fl_k2 - float(delta(slice_, k5)),
        (k1 - c) - (1.0 - alpha) * (k3 - c),
        (k1 - c) - alpha * (k5 - k4),
    )


def solve_eta(slice_: MarketSlice) -> Eta:
    """Exclusion thresholds on a C2 slice: the low threshold leaves exactly
    the total-variation mass between it and the cost; the high threshold is
    its equal-quantile image."""
    region = classify_region(slice_)
    if region is not Region.C2:
        raise WrongRegion(f"eta thresholds require region C2, slice is {region.value}")
    gp = gap_profile(slice_)
    fl_c = float(slice_.f_l.cdf(slice_.c))
    eta_l = float(slice_.f_l.quantile(max(fl_c - gp.tv, 0.0)))
    eta_h = float(slice_.f_h.quantile(float(slice_.f_l.cdf(eta_l))))
    return Eta(eta_l=eta_l, eta_h=eta_h)


def _tilde_integrand(slice_: MarketSlice, shift: float):
    """Integrand z -> (b/(z+b))^2 with b the shifted equal-quantile image."""
    f_l, f_h = slice_.f_l, slice_.f_h

    def integrand(z):
        q = np.clip(np.asarray(f_l.cdf(z)) - shift, 0.0, 1.0 - 1e-15)
        b = np.asarray(f_h.quantile(q))
        with np.errstate(invalid="ignore", divide="ignore"):
            val = np.where(z + b > 0, (b / (z + b)) ** 2, 0.0)
        return val

    return integrand


def _tilde_inner(slice_: MarketSlice, k5: float):
    """Given a candidate top cutoff, recover (k1..k4, residual) or report why
    the middle equation is infeasible ('small' / 'large').

    The harmonic level is pinned by continuity of the low-side dual at the
    top cutoff: harmonic = (right integral) - (k5 - k4)/4. The right integrand
    stays above 1/4 on [k4, k5], so the level is nonnegative.
    """
    gp = gap_profile(slice_)
    f_l, f_h = slice_.f_l, slice_.f_h
    k4, _ = reflect_g_h(slice_, k5)
    d5 = float(delta(slice_, k5))
    k2 = float(f_l.quantile(min(d5, 1.0)))
    right = adaptive_simpson(_tilde_integrand(slice_, d5), k4, k5, tol=QUAD_TOL)
    harmonic = right - (k5 - k4) / 4.0

    def middle(k3):
        shift = float(delta(slice_, k3))
        inner = adaptive_simpson(_tilde_integrand(slice_, shift), k2, k3, tol=QUAD_TOL)
        return k3 / 4.0 - inner - harmonic

    if middle(k2) > 0.0:
        return None, "small"
    if middle(gp.v_star) < 0.0:
        return None, "large"
    k3 = bisect(middle, k2, gp.v_star)
    if harmonic >= k2:
        return None, "large"
    k1 = harmonic * k2 / (k2 - harmonic)
    residual = d5 - float(delta(slice_, k3)) - float(f_h.cdf(k1))
    return (k1, k2, k3, k4, harmonic), residual


@lru_cache(maxsize=128)
def solve_kappa_tilde(slice_: MarketSlice) -> Kappa:
    """Cutoffs for the noisy-value variant (values uniform on [0, 2v]),
    solved for the c = 0, alpha = 1/2 specialization only.

    Outer bisection runs on the top cutoff; each evaluation solves the middle
    quadratic-integral equation for k3, reads k1 from the harmonic identity,
    and scores the remaining quantile equality.
    """
    if abs(slice_.c) > 1e-12 or abs(slice_.alpha - 0.5) > 1e-12:
        raise UnsupportedConfiguration(
            "noisy-value cutoffs are only derived for c = 0 and alpha = 1/2")
    if classify_region(slice_) is not Region.C1:
        raise WrongRegion("noisy-value cutoffs require region C1")
    gp = gap_profile(slice_)
    cap = slice_.cap()

    def status(k5):
        return _tilde_inner(slice_, k5)[1]

    # The middle equation is solvable only on a band of k5 values: below it
    # the right integral is too small ('small'), above it the k3 root would
    # pass the gap maximizer ('large'). The outer residual is positive at the
    # band's lower edge and negative at its upper edge, so a sign change is
    # guaranteed once the band is located.
    def boundary(pred, a, b):
        for _ in range(200):
            if b - a <= 1e-12 * max(1.0, b):
                break
            mid = 0.5 * (a + b)
            if pred(mid):
                a = mid
            else:
                b = mid
        return a, b

    step = 0.05 * max(gp.v_star, 1.0)
    prev = gp.v_star + 1e-9 * max(gp.v_star, 1.0)
    if status(prev) != "small":
        lo_feas = prev
    else:
        walk = prev
        while True:
            walk += step
            if walk > cap:
                raise NoConvergence("middle equation stays infeasible up to the working cap",
                                    cap=cap)
            if status(walk) != "small":
                break
            prev = walk
        _, lo_feas = boundary(lambda v: status(v) == "small", prev, walk)
        if status(lo_feas) == "large":
            raise NoConvergence("feasible band of the middle equation is numerically empty",
                                near=lo_feas)

    walk = lo_feas
    while status(walk) != "large":
        prev = walk
        walk += step
        if walk > cap:
            raise NoConvergence("upper edge of the feasible band not found below the cap",
                                cap=cap)
    hi_feas, _ = boundary(lambda v: status(v) != "large", prev, walk)

    lo, hi = lo_feas, hi_feas
    _, r_lo = _tilde_inner(slice_, lo)
    _, r_hi = _tilde_inner(slice_, hi)
    if not (r_lo > 0 >= r_hi or r_lo >= 0 > r_hi):
        raise NoConvergence("outer residual does not change sign across the feasible band",
                            band=(lo, hi), residuals=(r_lo, r_hi))
    for _ in range(200):
        if hi - lo <= 1e-12:
            break
        mid = 0.5 * (lo + hi)
        sol, res = _tilde_inner(slice_, mid)
        if sol is None:
            if res == "small":
                lo = mid
            else:
                hi = mid
            continue
        if res == 0.0:
            lo = hi = mid
            break
        if res > 0:
            lo = mid
        else:
            hi = mid
    k5 = 0.5 * (lo + hi)
    sol, res = _tilde_inner(slice_, k5)
    if sol is None:
        raise NoConvergence("outer bisection collapsed onto an infeasible point", k5=k5)
    k1, k2, k3, k4, _ = sol

    d3 = float(delta(slice_, k3))
    d5 = float(delta(slice_, k5))
    inner = adaptive_simpson(_tilde_integrand(slice_, d3), k2, k3, tol=QUAD_TOL)
    right = adaptive_simpson(_tilde_integrand(slice_, d5), k4, k5, tol=QUAD_TOL)
    harmonic = k1 * k2 / (k1 + k2)
    kappa = Kappa(
        k1=k1, k2=k2, k3=k3, k4=k4, k5=k5,
        residuals=(
            float(slice_.f_l.cdf(k2)) - d3 - float(slice_.f_h.cdf(k1)),
            float(slice_.f_l.cdf(k2)) - float(delta(slice_, k4)),
            float(slice_.f_l.cdf(k2)) - d5,
            harmonic - (k3 / 4.0 - inner),
            harmonic - (right - (k5 - k4) / 4.0),
        ),
        variant="tilde",
    )
    if kappa.max_residual > KAPPA_TILDE_TOL:
        raise NoConvergence("noisy-value cutoff residuals exceed tolerance",
                            residuals=kappa.residuals, kappa=kappa.as_tuple())
    return kappa
