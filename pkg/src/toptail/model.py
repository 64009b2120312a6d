"""Stretched-exponential law for scores above a threshold.

The density on ``x >= r0`` is::

    f(x) = exp(-((x - r0) / theta) ** (1 / a)) / (Gamma(a + 1) * theta)

equivalently ``X = r0 + theta * V**a`` with ``V ~ Gamma(a, 1)``. The tail
index ``a`` interpolates between a half-normal tail (a = 1/2) and an
exponential tail (a = 1).
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import AsymptoticRegimeWarning, DomainError
from .special import inv_reg_lower_gamma, log_gamma, reg_lower_gamma, reg_upper_gamma

DEFAULT_R0 = 2100.0


@dataclass(frozen=True)
class ThresholdModel:
    """Parameters of the over-threshold law: tail index, scale and threshold."""

    a: float
    theta: float
    r0: float = DEFAULT_R0

    def __post_init__(self):
        for name in ("a", "theta", "r0"):
            if not math.isfinite(getattr(self, name)):
                raise DomainError(f"{name} must be finite")
        if self.a <= 0.0:
            raise DomainError(f"tail index a must be > 0, got {self.a}")
        if self.theta <= 0.0:
            raise DomainError(f"scale theta must be > 0, got {self.theta}")


@dataclass(frozen=True)
class MomentSummary:
    mean: float
    sd: float
    variance: float
    median: float


def _scaled_excess(m: ThresholdModel, x):
    xx = np.asarray(x, dtype=float)
    if np.any(np.isnan(xx)) or np.any(xx < m.r0):
        raise DomainError(f"the law has no mass below r0={m.r0}")
    return (xx - m.r0) / m.theta


def _ret(values, like):
    return float(values) if np.ndim(like) == 0 else values


def log_density(m: ThresholdModel, x):
    u = _scaled_excess(m, x)
    out = -(u ** (1.0 / m.a)) - log_gamma(m.a + 1.0) - math.log(m.theta)
    return _ret(out, x)


def density(m: ThresholdModel, x):
    """Density at ``x``; raises DomainError below the threshold."""
    return _ret(np.exp(log_density(m, x)), x)


def cdf(m: ThresholdModel, x):
    u = _scaled_excess(m, x)
    return reg_lower_gamma(m.a, u ** (1.0 / m.a))


def survivor(m: ThresholdModel, x):
    """``1 - cdf`` without cancellation in the far tail."""
    u = _scaled_excess(m, x)
    return reg_upper_gamma(m.a, u ** (1.0 / m.a))


def quantile(m: ThresholdModel, p):
    pp = np.asarray(p, dtype=float)
    if np.any(np.isnan(pp)) or np.any(pp < 0.0) or np.any(pp >= 1.0):
        raise DomainError("probability must lie in [0, 1)")
    v = inv_reg_lower_gamma(m.a, pp)
    return _ret(m.r0 + m.theta * np.asarray(v) ** m.a, p)


def moments(m: ThresholdModel) -> MomentSummary:
    """Mean, standard deviation, variance and median in closed form."""
    lg_a = log_gamma(m.a)
    r2 = math.exp(log_gamma(2.0 * m.a) - lg_a)
    r3 = math.exp(log_gamma(3.0 * m.a) - lg_a)
    variance = m.theta**2 * (r3 - r2 * r2)
    return MomentSummary(
        mean=m.r0 + m.theta * r2,
        sd=math.sqrt(variance),
        variance=variance,
        median=quantile(m, 0.5),
    )


def gamma_variates(shape: float, size: int, rng: np.random.Generator) -> np.ndarray:
    """Gamma(shape, 1) draws by the Marsaglia-Tsang squeeze method.

    Shapes below one are boosted: ``G(a) = G(a + 1) * U**(1/a)``.
    """
    if shape <= 0.0:
        raise DomainError("gamma shape must be > 0")
    boost = shape < 1.0
    alpha = shape + 1.0 if boost else shape
    d = alpha - 1.0 / 3.0
    c = 1.0 / math.sqrt(9.0 * d)

    out = np.empty(size)
    filled = 0
    while filled < size:
        want = size - filled
        batch = int(want * 1.05) + 16
        z = rng.standard_normal(batch)
        u = rng.random(batch)
        v = (1.0 + c * z) ** 3
        with np.errstate(invalid="ignore", divide="ignore"):
            log_v = np.log(v)
            accept = (v > 0.0) & (
                (u < 1.0 - 0.0331 * z**4)
                | (np.log(u) < 0.5 * z * z + d * (1.0 - v + log_v))
            )
        vals = d * v[accept][:want]
        out[filled : filled + vals.size] = vals
        filled += vals.size
    if boost:
        out *= np.exp(np.log(rng.random(size)) / shape)
    return out


def sample(m: ThresholdModel, n: int, seed=None) -> np.ndarray:
    """Draw ``n`` scores via ``r0 + theta * V**a``; deterministic given ``seed``."""
    if n < 0:
        raise DomainError("n must be >= 0")
    rng = np.random.default_rng(seed)
    v = gamma_variates(m.a, n, rng)
    return m.r0 + m.theta * v**m.a


def survivor_asymptotic(a: float, u: float) -> float:
    """Leading-order survivor of the standardized law ``exp(-u**(1/a)) / Gamma(a + 1)``.

    Returns ``u**(1 - 1/a) * exp(-u**(1/a)) / Gamma(a)``. The constant follows
    from substituting ``s = t**(1/a)`` in the tail integral. Emits an
    AsymptoticRegimeWarning when ``u**(1/a) <= a``.
    """
    if a <= 0.0 or u <= 0.0:
        raise DomainError("need a > 0 and u > 0")
    s = u ** (1.0 / a)
    if s <= a:
        warnings.warn(
            f"u**(1/a) = {s:.3g} <= a = {a}; outside the asymptotic regime",
            AsymptoticRegimeWarning,
            stacklevel=2,
        )
    return math.exp((1.0 - 1.0 / a) * math.log(u) - s - log_gamma(a))
