"""Closed-form approximations for stratum maxima.

Gaussian strata with equicorrelation, the growth of expected maxima under the
stretched-exponential law, Gumbel norming constants, and the algebra trading
participation size against spread.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError
from .model import ThresholdModel
from .special import inv_reg_lower_gamma, log_gamma, reg_upper_gamma

EULER_GAMMA = 0.5772156649015329


@dataclass(frozen=True)
class GaussianStratum:
    """N(xi, sigma^2) members with common pairwise correlation rho."""

    xi: float
    sigma: float
    rho: float
    n: float

    def __post_init__(self):
        if self.sigma <= 0.0:
            raise DomainError("sigma must be > 0")
        if not 0.0 <= self.rho < 1.0:
            raise DomainError("rho must lie in [0, 1)")
        if self.n < 2:
            raise DomainError("n must be >= 2")


@dataclass(frozen=True)
class GumbelNorming:
    a_n: float
    b_n: float


def gaussian_max_mean(s: GaussianStratum) -> float:
    """Leading-order expected maximum ``xi + sqrt(1 - rho) * sigma * sqrt(2 ln n)``."""
    return s.xi + math.sqrt(1.0 - s.rho) * s.sigma * math.sqrt(2.0 * math.log(s.n))


def excess_ratio(sigma_a: float, n_a: float, sigma_b: float, n_b: float) -> float:
    """How far B's top score reaches beyond the common mean, relative to A's."""
    if min(sigma_a, sigma_b) <= 0.0 or min(n_a, n_b) < 2:
        raise DomainError("need positive scales and sizes >= 2")
    return sigma_b * math.sqrt(math.log(n_b)) / (sigma_a * math.sqrt(math.log(n_a)))


def breakeven_size(n_b: float, sigma_a: float, sigma_b: float) -> float:
    """Size ``n_a`` at which A's expected top score matches B's.

    Solves ``ln n_b / ln n_a = sigma_a**2 / sigma_b**2``, giving
    ``n_b ** (sigma_b**2 / sigma_a**2)``. Not rounded.
    """
    if min(sigma_a, sigma_b) <= 0.0 or n_b < 2:
        raise DomainError("need positive scales and n_b >= 2")
    return math.exp(math.log(n_b) * sigma_b**2 / sigma_a**2)


def expected_max(m: ThresholdModel, n: float, refined: bool = False) -> float:
    """Approximate mean of the largest of ``n`` draws.

    Unrefined: ``r0 + theta * L**a`` with ``L = ln n``. Refined adds the Gumbel
    mean shift ``EULER_GAMMA * a * L**(a - 1)`` inside the bracket.
    """
    if n < 2:
        raise DomainError("n must be >= 2")
    L = math.log(n)
    core = L**m.a
    if refined:
        core += EULER_GAMMA * m.a * L ** (m.a - 1.0)
    return m.r0 + m.theta * core


def gumbel_norming(a: float, n: float) -> GumbelNorming:
    """First-order norming for maxima on the standardized scale.

    ``a_n = a * L**(a - 1)``, ``b_n = L**a`` with ``L = ln n``. These omit the
    ``ln ln n`` correction, so convergence is logarithmically slow; see
    :func:`exact_gumbel_norming`.
    """
    if a <= 0.0:
        raise DomainError("a must be > 0")
    if n < 3:
        raise DomainError("n must be >= 3")
    L = math.log(n)
    return GumbelNorming(a_n=a * L ** (a - 1.0), b_n=L**a)


def _upper_tail_point(a: float, n: float) -> float:
    """Solve ``Q(a, v) = 1 / n`` for ``v``.

    Moderate ``n`` goes through the lower-tail inverse. Once ``1 - 1/n`` loses
    precision, Newton steps on ``ln Q(a, v) + ln n`` start from the asymptote
    ``Q ~ v**(a-1) e**-v / Gamma(a)``.
    """
    if n <= 1e4:
        return float(inv_reg_lower_gamma(a, 1.0 - 1.0 / n))
    log_n = math.log(n)
    lg = log_gamma(a)
    v = log_n + (a - 1.0) * math.log(log_n) - lg
    for _ in range(50):
        log_q = math.log(reg_upper_gamma(a, v))
        slope = -math.exp((a - 1.0) * math.log(v) - v - lg - log_q)
        step = (log_q + log_n) / slope
        v = max(v - step, 0.5 * v)
        if abs(step) <= 1e-14 * v:
            break
    return v


def exact_gumbel_norming(a: float, n: float) -> GumbelNorming:
    """Norming from the exact tail: ``n * S(b_n) = 1`` and ``a_n = S(b_n) / f(b_n)``."""
    if a <= 0.0:
        raise DomainError("a must be > 0")
    if n < 3:
        raise DomainError("n must be >= 3")
    v = _upper_tail_point(a, n)
    b_n = v**a
    # standardized density f(u) = exp(-u^{1/a}) / Gamma(a + 1) at u = b_n
    tail = reg_upper_gamma(a, v)
    a_n = tail * math.exp(v + log_gamma(a + 1.0))
    return GumbelNorming(a_n=a_n, b_n=b_n)


def to_rating_scale(norm: GumbelNorming, m: ThresholdModel) -> GumbelNorming:
    """Map standardized norming constants to the rating scale of ``m``."""
    return GumbelNorming(a_n=m.theta * norm.a_n, b_n=m.r0 + m.theta * norm.b_n)


def sample_equicorrelated(s: GaussianStratum, reps: int, seed=None) -> np.ndarray:
    """``reps`` x ``n`` draws via ``xi + sigma * (sqrt(rho) Z0 + sqrt(1 - rho) Z_i)``."""
    rng = np.random.default_rng(seed)
    n = int(s.n)
    z0 = rng.standard_normal((reps, 1))
    z = rng.standard_normal((reps, n))
    return s.xi + s.sigma * (math.sqrt(s.rho) * z0 + math.sqrt(1.0 - s.rho) * z)


def sample_gaussian_maxima(s: GaussianStratum, reps: int, seed=None) -> np.ndarray:
    """Exact draws of the stratum maximum without materializing the stratum.

    The idiosyncratic maximum is ``Phi^{-1}(U**(1/n))``; the common factor adds
    on top.
    """
    from scipy.stats import norm

    rng = np.random.default_rng(seed)
    u = rng.random(reps)
    z0 = rng.standard_normal(reps)
    upper = -np.expm1(np.log(u) / s.n)
    zmax = norm.isf(upper)
    return s.xi + s.sigma * (math.sqrt(s.rho) * z0 + math.sqrt(1.0 - s.rho) * zmax)
