"""Maximum-likelihood fitting of the over-threshold law.

Full samples are fitted through the profile likelihood in ``a``: for fixed
``a`` the scale maximizer is available in closed form,
``theta(a) = (sum((x - r0) ** (1/a)) / (n * a)) ** a``. Top-k lists are fitted
by direct two-dimensional search. Covariances come from the inverted negative
numerical Hessian computed in ``(a, log theta)`` coordinates.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import minimize, minimize_scalar
from scipy.special import logsumexp

from .errors import (
    BoundaryFitWarning,
    ContractError,
    DegenerateSampleError,
    DomainError,
    PropagationError,
    SingularInformationError,
)
from .model import ThresholdModel, cdf, log_density, moments, quantile, survivor
from .special import log_gamma

A_BOUNDS = (0.2, 3.0)
A_BOUNDS_EXPANDED = (0.1, 6.0)
MIN_FIT_SIZE = 10
HESSIAN_REL_STEP = 1e-4
FOCUS_REL_STEP = 1e-5


@dataclass(frozen=True)
class RatingSample:
    """All ratings at or above ``r0`` for one stratum."""

    stratum: str
    r0: float
    ratings: np.ndarray

    def __post_init__(self):
        arr = np.array(self.ratings, dtype=float).ravel()
        if not np.all(np.isfinite(arr)):
            raise DomainError("ratings must be finite")
        if np.any(arr < self.r0):
            raise DomainError(f"every rating must be >= r0={self.r0}")
        arr.flags.writeable = False
        object.__setattr__(self, "ratings", arr)

    @property
    def n(self) -> int:
        return int(self.ratings.size)


@dataclass(frozen=True)
class TopKSample:
    """The ``k`` largest ratings (nonincreasing) plus the total count above ``r0``."""

    r0: float
    top: np.ndarray
    n_total: int

    def __post_init__(self):
        arr = np.array(self.top, dtype=float).ravel()
        if not np.all(np.isfinite(arr)):
            raise DomainError("ratings must be finite")
        if np.any(np.diff(arr) > 0.0):
            raise ContractError("top list must be nonincreasing")
        if np.any(arr < self.r0):
            raise DomainError(f"every rating must be >= r0={self.r0}")
        if arr.size > self.n_total:
            raise ContractError("k cannot exceed n_total")
        arr.flags.writeable = False
        object.__setattr__(self, "top", arr)

    @property
    def k(self) -> int:
        return int(self.top.size)


@dataclass
class FitResult:
    model: ThresholdModel
    cov: np.ndarray  # (a, theta) order
    loglik: float
    method: str  # "full" or "topk"
    n: int
    k: Optional[int] = None
    focus_estimates: Dict[str, Tuple[float, float]] = field(default_factory=dict)
    at_boundary: bool = False
    warnings: List[str] = field(default_factory=list)

    @property
    def se_a(self) -> float:
        return math.sqrt(self.cov[0, 0])

    @property
    def se_theta(self) -> float:
        return math.sqrt(self.cov[1, 1])


@dataclass
class SharedFitResult:
    """One tail index shared across groups, one scale per group."""

    a_shared: float
    theta_by_group: Dict[str, float]
    loglik: float
    aic: float
    bic: float
    n_params: int
    n_total: int
    cov: np.ndarray  # (a, theta_1, ..., theta_G)
    separate_loglik: float
    separate_aic: float
    separate_bic: float
    separate_fits: Dict[str, FitResult]
    at_boundary: bool = False
    warnings: List[str] = field(default_factory=list)

    @property
    def se_a(self) -> float:
        return math.sqrt(self.cov[0, 0])


# ---------------------------------------------------------------------------
# likelihoods
# ---------------------------------------------------------------------------


def _excess(s: RatingSample) -> np.ndarray:
    return s.ratings - s.r0


def loglik_full(m: ThresholdModel, s: RatingSample) -> float:
    if m.r0 != s.r0:
        raise ContractError(f"model r0={m.r0} does not match sample r0={s.r0}")
    y = _excess(s)
    n = y.size
    with np.errstate(divide="ignore"):
        power = np.exp((np.log(y) - math.log(m.theta)) / m.a)
    return float(-n * log_gamma(m.a + 1.0) - power.sum() - n * math.log(m.theta))


def _log_power_sum(a: float, y: np.ndarray) -> float:
    # log sum y^(1/a), stable for small a
    pos = y[y > 0.0]
    return float(logsumexp(np.log(pos) / a))


def profile_theta(a: float, s: RatingSample) -> float:
    """Closed-form maximizer of the full log-likelihood in theta at fixed ``a``."""
    if a <= 0.0:
        raise DomainError("tail index a must be > 0")
    y = _excess(s)
    if y.size == 0 or not np.any(y > 0.0):
        raise DegenerateSampleError("need at least one rating above r0")
    return math.exp(a * (_log_power_sum(a, y) - math.log(y.size * a)))


def profile_loglik(a: float, s: RatingSample) -> float:
    """``loglik_full`` at ``(a, profile_theta(a))``; the power sum equals ``n * a`` there."""
    n = s.n
    theta = profile_theta(a, s)
    return float(-n * log_gamma(a + 1.0) - n * a - n * math.log(theta))


def _log_cdf(m: ThresholdModel, x: float) -> float:
    p = cdf(m, x)
    if p > 0.5:
        return math.log1p(-survivor(m, x))
    return math.log(p) if p > 0.0 else -math.inf


def loglik_topk(m: ThresholdModel, t: TopKSample) -> float:
    """Log-likelihood of a top-k list: ``(n - k) log F(x_k) + sum log f(x_i)``."""
    if t.k < 2:
        raise ContractError("top-k likelihood needs k >= 2")
    if m.r0 != t.r0:
        raise ContractError(f"model r0={m.r0} does not match sample r0={t.r0}")
    dens = float(np.sum(log_density(m, t.top)))
    hidden = t.n_total - t.k
    if hidden == 0:
        return dens
    log_f = _log_cdf(m, float(t.top[-1]))
    if math.isinf(log_f):
        return -math.inf
    return hidden * log_f + dens


# ---------------------------------------------------------------------------
# numerics
# ---------------------------------------------------------------------------


def numerical_hessian(
    fun: Callable[[np.ndarray], float], x: Sequence[float], rel_step: float = HESSIAN_REL_STEP
) -> np.ndarray:
    """Centered-difference Hessian with step ``rel_step * (1 + |x_i|)``.

    Returned unsymmetrized so callers can check symmetry before averaging.
    """
    x = np.asarray(x, dtype=float)
    k = x.size
    h = rel_step * (1.0 + np.abs(x))
    f0 = fun(x)
    hess = np.empty((k, k))

    def at(*moves):
        z = x.copy()
        for i, sgn in moves:
            z[i] += sgn * h[i]
        return fun(z)

    for i in range(k):
        hess[i, i] = (at((i, 1)) - 2.0 * f0 + at((i, -1))) / h[i] ** 2
        for j in range(k):
            if j == i:
                continue
            hess[i, j] = (
                at((i, 1), (j, 1)) - at((i, 1), (j, -1)) - at((i, -1), (j, 1)) + at((i, -1), (j, -1))
            ) / (4.0 * h[i] * h[j])
    return hess


def _covariance(loglik_u: Callable[[np.ndarray], float], u_hat: np.ndarray) -> np.ndarray:
    """Inverse observed information, mapped from (a, log theta...) to (a, theta...)."""
    hess = numerical_hessian(loglik_u, u_hat)
    scale = np.max(np.abs(hess))
    if not np.allclose(hess, hess.T, rtol=1e-6, atol=1e-6 * scale):
        raise SingularInformationError("numerical Hessian is not symmetric")
    info = -0.5 * (hess + hess.T)
    try:
        np.linalg.cholesky(info)
    except np.linalg.LinAlgError as exc:
        raise SingularInformationError("observed information is not positive definite") from exc
    cov_u = np.linalg.inv(info)
    jac = np.diag(np.concatenate([[1.0], np.exp(u_hat[1:])]))
    cov = jac @ cov_u @ jac.T
    return 0.5 * (cov + cov.T)


def _maximize_profile(objective: Callable[[float], float], bounds) -> Tuple[float, bool]:
    """Grid scan then bounded Brent refinement; returns (argmax, on_edge)."""
    lo, hi = bounds
    grid = np.geomspace(lo, hi, 64)
    vals = np.array([objective(a) for a in grid])
    vals[~np.isfinite(vals)] = -np.inf
    i = int(np.argmax(vals))
    left = grid[max(i - 1, 0)]
    right = grid[min(i + 1, grid.size - 1)]
    res = minimize_scalar(
        lambda a: -objective(a), bounds=(left, right), method="bounded", options={"xatol": 1e-12}
    )
    a_hat = float(res.x)
    if -res.fun < vals[i]:
        a_hat = float(grid[i])
    tol = 1e-6 * (hi - lo)
    return a_hat, (a_hat - lo < tol) or (hi - a_hat < tol)


def _search_a(objective, warn_list: List[str]) -> Tuple[float, bool]:
    a_hat, edge = _maximize_profile(objective, A_BOUNDS)
    if edge:
        msg = f"tail index hit search box {A_BOUNDS}; expanded to {A_BOUNDS_EXPANDED}"
        warn_list.append(msg)
        warnings.warn(msg, BoundaryFitWarning, stacklevel=3)
        a_hat, edge = _maximize_profile(objective, A_BOUNDS_EXPANDED)
        if edge:
            msg = f"tail index on the boundary of {A_BOUNDS_EXPANDED}"
            warn_list.append(msg)
            warnings.warn(msg, BoundaryFitWarning, stacklevel=3)
    return a_hat, edge


# ---------------------------------------------------------------------------
# focus parameters
# ---------------------------------------------------------------------------


def standard_foci(r0: float) -> Dict[str, Callable[[float, float], float]]:
    """Focus functions of (a, theta): the parameters, mean, sd and median."""

    def mu(a, theta):
        return moments(ThresholdModel(a, theta, r0)).mean

    def sigma(a, theta):
        return moments(ThresholdModel(a, theta, r0)).sd

    def median(a, theta):
        return quantile(ThresholdModel(a, theta, r0), 0.5)

    return {
        "a": lambda a, theta: a,
        "theta": lambda a, theta: theta,
        "mu": mu,
        "sigma": sigma,
        "median": median,
    }


def delta_method(fit: FitResult, focus: Callable[[float, float], float]) -> Tuple[float, float]:
    """Estimate and delta-method standard error of ``focus(a, theta)``."""
    p = np.array([fit.model.a, fit.model.theta])
    est = focus(*p)
    if not math.isfinite(est):
        raise PropagationError("focus is not finite at the estimate")
    grad = np.empty(2)
    for i in range(2):
        h = FOCUS_REL_STEP * (1.0 + abs(p[i]))
        up, dn = p.copy(), p.copy()
        up[i] += h
        dn[i] -= h
        grad[i] = (focus(*up) - focus(*dn)) / (2.0 * h)
    if not np.all(np.isfinite(grad)):
        raise PropagationError("focus gradient is not finite at the estimate")
    var = float(grad @ fit.cov[:2, :2] @ grad)
    return float(est), math.sqrt(max(var, 0.0))


def _attach_foci(fit: FitResult) -> FitResult:
    for name, fn in standard_foci(fit.model.r0).items():
        fit.focus_estimates[name] = delta_method(fit, fn)
    return fit


# ---------------------------------------------------------------------------
# fitting
# ---------------------------------------------------------------------------


def fit_full(s: RatingSample) -> FitResult:
    """Fit from the complete sample by maximizing the profile likelihood in ``a``."""
    if s.n < MIN_FIT_SIZE:
        raise ContractError(f"need at least {MIN_FIT_SIZE} ratings to fit, got {s.n}")
    if not np.any(_excess(s) > 0.0):
        raise DegenerateSampleError("all ratings equal r0")
    notes: List[str] = []
    a_hat, edge = _search_a(lambda a: profile_loglik(a, s), notes)
    theta_hat = profile_theta(a_hat, s)
    model = ThresholdModel(a_hat, theta_hat, s.r0)

    def ll(u):
        return loglik_full(ThresholdModel(u[0], math.exp(u[1]), s.r0), s)

    cov = _covariance(ll, np.array([a_hat, math.log(theta_hat)]))
    fit = FitResult(
        model=model,
        cov=cov,
        loglik=loglik_full(model, s),
        method="full",
        n=s.n,
        at_boundary=edge,
        warnings=notes,
    )
    return _attach_foci(fit)


def _topk_start(t: TopKSample, bounds) -> np.ndarray:
    y_max = float(t.top[0] - t.r0)
    log_hi = math.log(max(y_max, 1e-12))
    best = (-math.inf, None)
    for a in np.geomspace(bounds[0], bounds[1], 32):

        def neg(lt, a=a):
            v = loglik_topk(ThresholdModel(a, math.exp(lt), t.r0), t)
            return -v if math.isfinite(v) else 1e300

        res = minimize_scalar(neg, bounds=(log_hi - 15.0, log_hi + 5.0), method="bounded")
        if -res.fun > best[0]:
            best = (-res.fun, np.array([a, float(res.x)]))
    return best[1]


def _topk_maximize(t: TopKSample, bounds) -> Tuple[np.ndarray, bool]:
    lo, hi = bounds

    def neg(u):
        if not lo <= u[0] <= hi:
            return 1e300
        v = loglik_topk(ThresholdModel(u[0], math.exp(u[1]), t.r0), t)
        return -v if math.isfinite(v) else 1e300

    u0 = _topk_start(t, bounds)
    res = minimize(neg, u0, method="Nelder-Mead", options={"xatol": 1e-10, "fatol": 1e-12, "maxiter": 10_000})
    # restart once from the optimum to escape simplex collapse
    res = minimize(neg, res.x, method="Nelder-Mead", options={"xatol": 1e-10, "fatol": 1e-12, "maxiter": 10_000})
    u = res.x
    tol = 1e-6 * (hi - lo)
    return u, (u[0] - lo < tol) or (hi - u[0] < tol)


def fit_topk(t: TopKSample) -> FitResult:
    """Fit from a top-k list and the known participation count."""
    if t.k < MIN_FIT_SIZE:
        raise ContractError(f"need at least {MIN_FIT_SIZE} listed ratings, got {t.k}")
    if t.top[-1] <= t.r0 and t.n_total > t.k:
        raise DegenerateSampleError("smallest listed rating equals r0; censoring term vanishes")
    notes: List[str] = []
    u, edge = _topk_maximize(t, A_BOUNDS)
    if edge:
        msg = f"tail index hit search box {A_BOUNDS}; expanded to {A_BOUNDS_EXPANDED}"
        notes.append(msg)
        warnings.warn(msg, BoundaryFitWarning, stacklevel=2)
        u, edge = _topk_maximize(t, A_BOUNDS_EXPANDED)
        if edge:
            msg = f"tail index on the boundary of {A_BOUNDS_EXPANDED}"
            notes.append(msg)
            warnings.warn(msg, BoundaryFitWarning, stacklevel=2)
    model = ThresholdModel(float(u[0]), math.exp(u[1]), t.r0)

    def ll(v):
        return loglik_topk(ThresholdModel(v[0], math.exp(v[1]), t.r0), t)

    cov = _covariance(ll, np.asarray(u, dtype=float))
    fit = FitResult(
        model=model,
        cov=cov,
        loglik=loglik_topk(model, t),
        method="topk",
        n=t.n_total,
        k=t.k,
        at_boundary=edge,
        warnings=notes,
    )
    return _attach_foci(fit)


def fit_shared_tail(groups: Iterable[RatingSample]) -> SharedFitResult:
    """Fit one tail index common to all groups with a free scale per group.

    AIC and BIC are reported for the shared model and for separate fits.
    """
    groups = list(groups)
    if len(groups) < 2:
        raise ContractError("need at least two groups")
    r0 = groups[0].r0
    if any(g.r0 != r0 for g in groups):
        raise ContractError("groups must share r0")
    labels = [g.stratum for g in groups]
    if len(set(labels)) != len(labels):
        labels = [f"{g.stratum}#{i}" for i, g in enumerate(groups)]
    for g in groups:
        if g.n < MIN_FIT_SIZE:
            raise ContractError(f"group {g.stratum!r} has fewer than {MIN_FIT_SIZE} ratings")

    notes: List[str] = []
    a_hat, edge = _search_a(lambda a: sum(profile_loglik(a, g) for g in groups), notes)
    thetas = [profile_theta(a_hat, g) for g in groups]

    def ll(u):
        return sum(
            loglik_full(ThresholdModel(u[0], math.exp(lt), r0), g) for lt, g in zip(u[1:], groups)
        )

    u_hat = np.array([a_hat] + [math.log(t) for t in thetas])
    cov = _covariance(ll, u_hat)
    loglik = ll(u_hat)
    n_total = sum(g.n for g in groups)
    p_shared = 1 + len(groups)
    p_sep = 2 * len(groups)

    separate = {lab: fit_full(g) for lab, g in zip(labels, groups)}
    sep_ll = sum(f.loglik for f in separate.values())
    return SharedFitResult(
        a_shared=a_hat,
        theta_by_group=dict(zip(labels, thetas)),
        loglik=loglik,
        aic=2.0 * p_shared - 2.0 * loglik,
        bic=p_shared * math.log(n_total) - 2.0 * loglik,
        n_params=p_shared,
        n_total=n_total,
        cov=cov,
        separate_loglik=sep_ll,
        separate_aic=2.0 * p_sep - 2.0 * sep_ll,
        separate_bic=p_sep * math.log(n_total) - 2.0 * sep_ll,
        separate_fits=separate,
        at_boundary=edge,
        warnings=notes,
    )
