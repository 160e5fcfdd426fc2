import numpy as np
import pytest

from fairprice.dist import Exponential, ExponentialMixture, MarketSlice, PiecewiseLinearCdf, ScaledFamily


@pytest.fixture(scope="session")
def exp13():
    """Zero-cost exponential pair, equal shares; region C1."""
    return MarketSlice(c=0.0, alpha=0.5, f_l=Exponential(1.0), f_h=Exponential(3.0))


@pytest.fixture(scope="session")
def exp112():
    return MarketSlice(c=0.0, alpha=0.5, f_l=Exponential(1.0), f_h=Exponential(12.0))


@pytest.fixture(scope="session")
def c2_slice():
    """Scaled exponential family with mean ratio 3 at unit cost; region C2."""
    return MarketSlice(c=1.0, alpha=0.5,
                       f_l=ScaledFamily(Exponential(1.0), 1.0),
                       f_h=ScaledFamily(Exponential(3.0), 1.0))


@pytest.fixture(scope="session")
def c3_slice():
    """Exponential pair with cost beyond the gap maximizer; region C3."""
    return MarketSlice(c=2.0, alpha=0.5, f_l=Exponential(1.0), f_h=Exponential(3.0))


def scaled12_slice(c: float, alpha: float = 0.5) -> MarketSlice:
    return MarketSlice(c=c, alpha=alpha,
                       f_l=ScaledFamily(Exponential(1.0), c),
                       f_h=ScaledFamily(Exponential(12.0), c))


def narrow_slice(alpha: float) -> MarketSlice:
    """Bounded-support pair on [1, 2] with cost 0.5: uniform low group, step
    high group. The surplus condition alpha*(2-c) > 1-c flips at alpha=1/3."""
    f_l = PiecewiseLinearCdf(knots=((1.0, 0.0), (2.0, 1.0)))
    f_h = PiecewiseLinearCdf(knots=((1.0, 0.0), (1.5, 0.25), (2.0, 1.0)))
    return MarketSlice(c=0.5, alpha=alpha, f_l=f_l, f_h=f_h)


def mixture_slice(seed: int = 0, alpha: float = 0.5) -> MarketSlice:
    rng = np.random.default_rng(seed)
    m1 = float(rng.uniform(0.4, 1.0))
    m2 = float(rng.uniform(2.5, 6.0))
    w_l = float(rng.uniform(0.55, 0.9))
    w_h = float(rng.uniform(0.05, 0.35))
    return MarketSlice(
        c=0.0, alpha=alpha,
        f_l=ExponentialMixture(weights=(w_l, 1 - w_l), means=(m1, m2)),
        f_h=ExponentialMixture(weights=(w_h, 1 - w_h), means=(m1, m2)),
    )


def random_c1_slices(n: int, seed: int = 20240817):
    """n region-C1 slices: zero-cost exponential pairs, positive-cost scaled
    families with a wide mean ratio, and zero-cost two-component mixtures."""
    rng = np.random.default_rng(seed)
    out = []
    n_exp = int(0.6 * n)
    n_scaled = int(0.2 * n)
    for _ in range(n_exp):
        ml = float(rng.uniform(0.5, 2.0))
        ratio = float(rng.uniform(1.5, 8.0))
        out.append(MarketSlice(c=0.0, alpha=float(rng.uniform(0.15, 0.85)),
                               f_l=Exponential(ml), f_h=Exponential(ml * ratio)))
    for _ in range(n_scaled):
        lam = float(rng.uniform(9.5, 14.0))
        c = float(rng.uniform(0.3, 2.0))
        out.append(MarketSlice(c=c, alpha=float(rng.uniform(0.2, 0.8)),
                               f_l=ScaledFamily(Exponential(1.0), c),
                               f_h=ScaledFamily(Exponential(lam), c)))
    while len(out) < n:
        m1 = float(rng.uniform(0.4, 1.0))
        m2 = float(rng.uniform(2.5, 6.0))
        w_l = float(rng.uniform(0.55, 0.9))
        w_h = float(rng.uniform(0.05, 0.35))
        out.append(MarketSlice(
            c=0.0, alpha=float(rng.uniform(0.2, 0.8)),
            f_l=ExponentialMixture(weights=(w_l, 1 - w_l), means=(m1, m2)),
            f_h=ExponentialMixture(weights=(w_h, 1 - w_h), means=(m1, m2))))
    return out


def ks_distance(values: np.ndarray, weights: np.ndarray, dist) -> float:
    """Kolmogorov distance between a weighted sample and an analytic cdf."""
    order = np.argsort(values)
    cum = np.cumsum(weights[order])
    cdf = np.asarray(dist.cdf(values[order]))
    return float(max(np.max(np.abs(cum - cdf)),
                     np.max(np.abs(np.concatenate([[0.0], cum[:-1]]) - cdf))))
