"""Closed-form dual certificates and their verification.

The dual pair (phi, psi) is piecewise affine in value with breakpoints at the
cutoffs; pointwise feasibility phi(v_l) + psi(v_h) >= pair profit everywhere,
plus equality on the optimal coupling's support, certifies optimality of the
coupling and the matching pricing rule. When the low-group cdf at cost
reaches the total variation distance the certificate degenerates to the split
gains phi = (1-alpha)(v-c)^+, psi = alpha(v-c)^+ and full extraction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .cutoffs import Region, classify_region, solve_kappa
from .dist import MarketSlice
from .errors import InfeasibleCertificate, SlacknessViolation
from .matching import Coupling
from .welfare import pair_profit

FEASIBILITY_FLOOR = -1e-6
SLACKNESS_TOL = 1e-6


@dataclass(frozen=True)
class PiecewiseAffine:
    """f(v) = slope_i * v + intercept_i on the i-th branch; branches split at
    the interior breakpoints (left-open, right-closed)."""

    breaks: tuple
    slopes: tuple
    intercepts: tuple

    def __post_init__(self):
        if len(self.slopes) != len(self.breaks) + 1 or len(self.slopes) != len(self.intercepts):
            raise ValueError("need one more branch than breakpoints")

    def __call__(self, v):
        v_arr = np.asarray(v, dtype=float)
        idx = np.searchsorted(np.asarray(self.breaks), v_arr, side="left")
        out = np.asarray(self.slopes)[idx] * v_arr + np.asarray(self.intercepts)[idx]
        return out if out.shape else float(out)

    def branch_integral(self, dist, lo: float, hi: float) -> float:
        """Exact integral of f against a distribution with partial moments."""
        points = [lo] + [b for b in self.breaks if lo < b < hi] + [hi]
        total = 0.0
        for a, b in zip(points[:-1], points[1:]):
            mid = 0.5 * (a + b) if math.isfinite(b) else a + 1.0
            i = int(np.searchsorted(np.asarray(self.breaks), mid, side="left"))
            cdf_b = 1.0 if math.isinf(b) else float(dist.cdf(b))
            total += (self.slopes[i] * float(dist.partial_mean(a, b))
                      + self.intercepts[i] * (cdf_b - float(dist.cdf(a))))
        return total


@dataclass(frozen=True)
class DualCertificate:
    slice: MarketSlice
    regime: str  # "C1" or "degenerate"
    phi: PiecewiseAffine
    psi: PiecewiseAffine


def build_duals(slice_: MarketSlice) -> DualCertificate:
    """Construct the dual pair for the slice's region."""
    alpha, c = slice_.alpha, slice_.c
    region = classify_region(slice_)
    if region is not Region.C1:
        half = PiecewiseAffine(breaks=(c,), slopes=(0.0, 1.0 - alpha),
                               intercepts=(0.0, -(1.0 - alpha) * c))
        other = PiecewiseAffine(breaks=(c,), slopes=(0.0, alpha),
                                intercepts=(0.0, -alpha * c))
        return DualCertificate(slice=slice_, regime="degenerate", phi=half, psi=other)
    return certificate_from_kappa(slice_, solve_kappa(slice_))


def certificate_from_kappa(slice_: MarketSlice, k) -> DualCertificate:
    """Raw constructor from an explicit cutoff vector; used by the verifier to
    certify previously solved (possibly tampered) cutoffs."""
    alpha, c = slice_.alpha, slice_.c
    phi = PiecewiseAffine(
        breaks=(k.k3, k.k4, k.k5),
        slopes=(0.0, 1.0 - alpha, 1.0, 1.0 - alpha),
        intercepts=(
            k.k1 - c,
            -(1.0 - alpha) * c,
            -c - alpha * (k.k4 - c),
            -(1.0 - alpha) * c + k.k1 - c,
        ),
    )
    psi = PiecewiseAffine(
        breaks=(k.k1, k.k3, k.k4, k.k5),
        slopes=(0.0, 1.0, alpha, 0.0, alpha),
        intercepts=(
            0.0,
            -k.k1,
            -alpha * c,
            alpha * (k.k4 - c),
            -alpha * c - (k.k1 - c),
        ),
    )
    return DualCertificate(slice=slice_, regime="C1", phi=phi, psi=psi)


def _grid_points(cert: DualCertificate, dist, n: int) -> np.ndarray:
    q = (np.arange(n) + 0.5) / n
    pts = list(np.asarray(dist.quantile(q), dtype=float))
    pts.extend(b for b in cert.phi.breaks + cert.psi.breaks)
    pts.append(cert.slice.c)
    return np.unique(np.asarray(pts, dtype=float))


def check_feasibility(cert: DualCertificate, slice_: MarketSlice, n: int) -> float:
    """Minimum of phi(v_l) + psi(v_h) - pair profit over an n-by-n quantile
    grid augmented with all breakpoints. Raises when it dips below -1e-6."""
    vl = _grid_points(cert, slice_.f_l, n)
    vh = _grid_points(cert, slice_.f_h, n)
    slack = (np.asarray(cert.phi(vl))[:, None] + np.asarray(cert.psi(vh))[None, :]
             - np.asarray(pair_profit(slice_, vl[:, None], vh[None, :])))
    i, j = np.unravel_index(np.argmin(slack), slack.shape)
    min_slack = float(slack[i, j])
    if min_slack < FEASIBILITY_FLOOR:
        raise InfeasibleCertificate(
            f"dual feasibility fails: slack {min_slack!r} at pair "
            f"({vl[i]!r}, {vh[j]!r})",
            witness=(float(vl[i]), float(vh[j])), slack=min_slack)
    return min_slack


def check_complementary_slackness(cert: DualCertificate, coupling: Coupling) -> float:
    """Maximum of |phi(v_l) + psi(v_h) - pair profit| over the coupling's
    atoms. Raises when it exceeds 1e-6."""
    slice_ = cert.slice
    gap = (np.asarray(cert.phi(coupling.v_l)) + np.asarray(cert.psi(coupling.v_h))
           - np.asarray(pair_profit(slice_, coupling.v_l, coupling.v_h)))
    i = int(np.argmax(np.abs(gap)))
    worst = float(gap[i])
    if abs(worst) > SLACKNESS_TOL:
        raise SlacknessViolation(
            f"complementary slackness fails: gap {worst!r} at atom "
            f"({coupling.v_l[i]!r}, {coupling.v_h[i]!r})",
            witness=(float(coupling.v_l[i]), float(coupling.v_h[i])), violation=worst)
    return float(np.max(np.abs(gap)))


def dual_value(cert: DualCertificate, slice_: MarketSlice | None = None) -> float:
    """Value of the dual objective: integral of phi against the low marginal
    plus psi against the high one, via exact partial moments."""
    s = slice_ if slice_ is not None else cert.slice
    lo = s.support_lo
    return (cert.phi.branch_integral(s.f_l, lo, math.inf)
            + cert.psi.branch_integral(s.f_h, lo, math.inf))


def certificate_to_dict(cert: DualCertificate) -> dict:
    def branches(pa: PiecewiseAffine):
        return {
            "breaks": list(pa.breaks),
            "slopes": list(pa.slopes),
            "intercepts": list(pa.intercepts),
        }

    return {
        "regime": cert.regime,
        "cost": cert.slice.c,
        "alpha": cert.slice.alpha,
        "phi": branches(cert.phi),
        "psi": branches(cert.psi),
    }
