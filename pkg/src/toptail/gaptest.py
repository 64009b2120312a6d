"""Two-group gap inference.

Scale-gap t statistic, a pooled permutation null for the difference in 0.90
quantiles (A) and in standard deviations (B), and a pointwise band for the
difference of empirical survivor functions.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from statistics import NormalDist
from typing import List, NamedTuple, Optional, Sequence, Tuple

import numpy as np

from .errors import ContractError, DomainError
from .estimation import FitResult, RatingSample, fit_full
from .model import survivor

Q_LEVEL = 0.90


class DiscrepancyPair(NamedTuple):
    A: float  # 0.90-quantile difference
    B: float  # sd difference


@dataclass
class BootstrapSummary:
    draws: np.ndarray  # shape (reps, 2), columns A, B
    observed: DiscrepancyPair
    exceed_A: float
    exceed_B: float
    reps: int
    seed: int

    def pairs(self) -> List[DiscrepancyPair]:
        return [DiscrepancyPair(float(a), float(b)) for a, b in self.draws]


@dataclass
class BandCurve:
    grid: np.ndarray
    diff: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    level: float
    parametric: Optional[np.ndarray] = None


def scale_gap_t(est1: float, se1: float, est2: float, se2: float) -> float:
    if se1 <= 0.0 or se2 <= 0.0:
        raise DomainError("standard errors must be > 0")
    return (est1 - est2) / math.sqrt(se1 * se1 + se2 * se2)


def empirical_stats(values) -> Tuple[float, float]:
    """Lower empirical 0.90 quantile and n-1 standard deviation."""
    x = np.asarray(values, dtype=float)
    if x.size < 2:
        raise DomainError("need at least two values")
    q90 = float(np.quantile(x, Q_LEVEL, method="inverted_cdf"))
    return q90, float(np.std(x, ddof=1))


def _discrepancy(x1, x2) -> DiscrepancyPair:
    q1, s1 = empirical_stats(x1)
    q2, s2 = empirical_stats(x2)
    return DiscrepancyPair(q1 - q2, s1 - s2)


def pooled_bootstrap(
    group1: RatingSample,
    group2: RatingSample,
    reps: int,
    seed: int,
    workers: int = 1,
) -> BootstrapSummary:
    """Permutation null for (A, B): random splits of the pooled ratings.

    Each replicate draws from its own generator seeded by ``(seed, rep)``, so
    the result does not depend on ``workers``.
    """
    if reps < 1:
        raise DomainError("reps must be >= 1")
    if group1.r0 != group2.r0:
        raise ContractError("groups must share r0")
    pool = np.concatenate([group1.ratings, group2.ratings])
    n1 = group1.n
    if n1 + group2.n != pool.size:
        raise ContractError("group sizes do not add up to the pool")

    def one(rep: int) -> DiscrepancyPair:
        rng = np.random.default_rng([seed, rep])
        perm = rng.permutation(pool.size)
        return _discrepancy(pool[perm[:n1]], pool[perm[n1:]])

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            rows = list(ex.map(one, range(reps)))
    else:
        rows = [one(r) for r in range(reps)]
    draws = np.array(rows, dtype=float).reshape(reps, 2)
    observed = _discrepancy(group1.ratings, group2.ratings)
    return BootstrapSummary(
        draws=draws,
        observed=observed,
        exceed_A=float(np.mean(draws[:, 0] >= observed.A)),
        exceed_B=float(np.mean(draws[:, 1] >= observed.B)),
        reps=reps,
        seed=seed,
    )


def empirical_survivor(values, grid) -> np.ndarray:
    """Fraction of ``values`` strictly above each grid point."""
    x = np.sort(np.asarray(values, dtype=float))
    return 1.0 - np.searchsorted(x, np.asarray(grid, dtype=float), side="right") / x.size


def survivor_diff_band(
    group1: RatingSample,
    group2: RatingSample,
    grid: Sequence[float],
    level: float = 0.90,
    fits: Optional[Tuple[FitResult, FitResult]] = None,
    overlay: bool = True,
) -> BandCurve:
    """Pointwise normal band for ``S1(x) - S2(x)``, plus the fitted difference.

    Half-width ``z * sqrt(S1(1-S1)/n1 + S2(1-S2)/n2)`` with ``z`` the
    ``(1 + level)/2`` normal quantile. ``fits`` defaults to full-sample fits;
    ``overlay=False`` skips the fitted difference altogether.
    """
    if group1.n == 0 or group2.n == 0:
        raise DomainError("both groups must be nonempty")
    if not 0.0 < level < 1.0:
        raise DomainError("level must lie in (0, 1)")
    g = np.asarray(grid, dtype=float)
    if np.any(g < group1.r0):
        raise DomainError("grid must lie at or above r0")
    s1 = empirical_survivor(group1.ratings, g)
    s2 = empirical_survivor(group2.ratings, g)
    diff = s1 - s2
    z = NormalDist().inv_cdf(0.5 * (1.0 + level))
    half = z * np.sqrt(s1 * (1.0 - s1) / group1.n + s2 * (1.0 - s2) / group2.n)
    if not overlay:
        fits = None
    elif fits is None and group1.n >= 10 and group2.n >= 10:
        fits = (fit_full(group1), fit_full(group2))
    parametric = None
    if fits is not None:
        parametric = survivor(fits[0].model, g) - survivor(fits[1].model, g)
    return BandCurve(grid=g, diff=diff, lower=diff - half, upper=diff + half, level=level, parametric=parametric)
