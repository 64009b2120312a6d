import math
import warnings

import numpy as np
import pytest
from scipy.optimize import minimize_scalar

from toptail.errors import (
    BoundaryFitWarning,
    ContractError,
    DegenerateSampleError,
    PropagationError,
    SingularInformationError,
)
from toptail.estimation import (
    RatingSample,
    TopKSample,
    _covariance,
    delta_method,
    fit_full,
    fit_shared_tail,
    fit_topk,
    loglik_full,
    loglik_topk,
    numerical_hessian,
    profile_loglik,
    profile_theta,
    standard_foci,
)
from toptail.model import ThresholdModel, cdf, sample

from .conftest import MEN, N_MEN, WOMEN


def naive_loglik(a, theta, r0, xs):
    total = 0.0
    for x in xs:
        total += -math.lgamma(a + 1.0) - ((x - r0) / theta) ** (1.0 / a) - math.log(theta)
    return total


def naive_topk(a, theta, r0, top, n):
    F = cdf(ThresholdModel(a, theta, r0), top[-1])
    total = (n - len(top)) * math.log(F)
    for x in top:
        total += -math.lgamma(a + 1.0) - ((x - r0) / theta) ** (1.0 / a) - math.log(theta)
    return total


def golden_theta(a, s):
    """Numerical argmax of the full log-likelihood in theta, golden-section search."""
    res = minimize_scalar(
        lambda lt: -naive_loglik(a, math.exp(lt), s.r0, s.ratings),
        bracket=(math.log(1.0), math.log(200.0), math.log(5000.0)),
        method="golden",
        tol=1e-12,
    )
    return math.exp(res.x)


def _topk(s, k):
    return TopKSample(s.r0, np.sort(s.ratings)[::-1][:k], s.n)


class TestLoglikFull:
    def test_single_at_threshold(self):
        s = RatingSample("x", 0.0, [0.0])
        assert loglik_full(ThresholdModel(1.0, 1.0, 0.0), s) == pytest.approx(0.0, abs=1e-14)

    def test_all_at_threshold(self):
        s = RatingSample("x", 2100.0, [2100.0] * 7)
        m = ThresholdModel(0.7, 150.0)
        expected = -7 * math.lgamma(1.7) - 7 * math.log(150.0)
        assert loglik_full(m, s) == pytest.approx(expected, rel=1e-13)

    def test_naive_oracle(self, men_sample):
        m = ThresholdModel(0.689, 209.28)
        oracle = naive_loglik(0.689, 209.28, 2100.0, men_sample.ratings)
        assert loglik_full(m, men_sample) == pytest.approx(oracle, rel=1e-9)

    def test_threshold_mismatch(self, men_sample):
        with pytest.raises(ContractError):
            loglik_full(ThresholdModel(0.7, 200.0, 2000.0), men_sample)


class TestProfileTheta:
    def test_exponential_is_mean_excess(self, men_sample):
        assert profile_theta(1.0, men_sample) == pytest.approx(np.mean(men_sample.ratings - 2100.0), rel=1e-12)

    @pytest.mark.parametrize("a", [0.4, 0.689, 1.0, 2.3])
    def test_single_observation(self, a):
        s = RatingSample("one", 2100.0, [2350.0])
        closed = 250.0 / a**a
        assert profile_theta(a, s) == pytest.approx(closed, rel=1e-12)
        assert golden_theta(a, s) == pytest.approx(closed, rel=1e-6)

    def test_men_argmax(self, men_sample):
        assert profile_theta(0.689, men_sample) == pytest.approx(golden_theta(0.689, men_sample), rel=1e-6)

    def test_profile_loglik_identity(self, women_sample):
        a = 0.65
        theta = profile_theta(a, women_sample)
        assert profile_loglik(a, women_sample) == pytest.approx(
            loglik_full(ThresholdModel(a, theta), women_sample), rel=1e-12
        )

    def test_degenerate(self):
        with pytest.raises(DegenerateSampleError):
            profile_theta(0.7, RatingSample("x", 2100.0, [2100.0, 2100.0]))

    def test_twenty_random_pairs(self):
        rng = np.random.default_rng(99)
        for i in range(20):
            a_true = rng.uniform(0.4, 1.5)
            n = int(rng.integers(20, 400))
            a = rng.uniform(0.3, 2.0)
            s = RatingSample("r", 2100.0, sample(ThresholdModel(a_true, rng.uniform(50, 300)), n, seed=i))
            theta = profile_theta(a, s)
            assert abs(theta - golden_theta(a, s)) / theta <= 1e-6


class TestFitFull:
    def test_men_recovery(self, men_fit):
        assert men_fit.model.a == pytest.approx(0.689, abs=0.04)
        assert men_fit.model.theta == pytest.approx(209.28, abs=11.0)
        assert 0.009 <= men_fit.se_a <= 0.018

    def test_women_se(self, women_fit):
        assert 0.03 <= women_fit.se_a <= 0.08

    def test_exponential_covered(self):
        s = RatingSample("e", 0.0, sample(ThresholdModel(1.0, 100.0, 0.0), 3000, seed=3))
        fit = fit_full(s)
        assert abs(fit.model.a - 1.0) <= 3 * fit.se_a

    def test_gradient_vanishes(self, men_sample, men_fit):
        u = np.array([men_fit.model.a, math.log(men_fit.model.theta)])

        def ll(v):
            return loglik_full(ThresholdModel(v[0], math.exp(v[1])), men_sample)

        h = 1e-5
        grad = [(ll(u + h * e) - ll(u - h * e)) / (2 * h) for e in np.eye(2)]
        assert np.linalg.norm(grad) <= 1e-4

    def test_hessian_symmetric(self, men_sample, men_fit):
        u = np.array([men_fit.model.a, math.log(men_fit.model.theta)])
        H = numerical_hessian(lambda v: loglik_full(ThresholdModel(v[0], math.exp(v[1])), men_sample), u)
        assert abs(H[0, 1] - H[1, 0]) <= 1e-6 * np.max(np.abs(H))

    def test_cov_psd(self, men_fit):
        np.testing.assert_allclose(men_fit.cov, men_fit.cov.T)
        assert np.all(np.linalg.eigvalsh(men_fit.cov) > 0.0)

    def test_cov_matches_expected_information(self, men_fit):
        # independent check of the SE scale: average over the fitted law of the
        # per-observation score outer product, estimated from a large simulation
        m = men_fit.model
        x = sample(m, 400_000, seed=42) - m.r0
        h = 1e-6

        def logf(a, lt, y):
            return -math.lgamma(a + 1.0) - np.exp((np.log(np.maximum(y, 1e-300)) - lt) / a) - lt

        lt = math.log(m.theta)
        ga = (logf(m.a + h, lt, x) - logf(m.a - h, lt, x)) / (2 * h)
        gt = (logf(m.a, lt + h, x) - logf(m.a, lt - h, x)) / (2 * h)
        info = np.array([[np.mean(ga * ga), np.mean(ga * gt)], [np.mean(ga * gt), np.mean(gt * gt)]])
        se_a = math.sqrt(np.linalg.inv(info)[0, 0] / men_fit.n)
        assert men_fit.se_a == pytest.approx(se_a, rel=0.05)

    def test_too_small(self):
        with pytest.raises(ContractError):
            fit_full(RatingSample("x", 2100.0, [2150.0] * 5))

    def test_boundary_warning(self):
        s = RatingSample("wide", 0.0, sample(ThresholdModel(9.0, 1.0, 0.0), 4000, seed=4))
        with pytest.warns(BoundaryFitWarning):
            fit = fit_full(s)
        assert fit.at_boundary
        assert fit.warnings

    def test_interior_fit_has_no_warnings(self, men_fit):
        assert not men_fit.at_boundary and not men_fit.warnings

    def test_focus_estimates(self, men_fit):
        assert set(men_fit.focus_estimates) == {"a", "theta", "mu", "sigma", "median"}

    def test_deterministic(self, women_sample):
        f1, f2 = fit_full(women_sample), fit_full(women_sample)
        assert f1.model == f2.model
        np.testing.assert_array_equal(f1.cov, f2.cov)

    @pytest.mark.slow
    def test_wald_coverage(self):
        hits = 0
        for rep in range(200):
            s = RatingSample("c", 2100.0, sample(MEN, 2000, seed=[7, rep]))
            fit = fit_full(s)
            hits += abs(fit.model.a - MEN.a) <= 1.96 * fit.se_a
        assert abs(hits / 200 - 0.95) <= 0.04


def test_singular_information_detected():
    with pytest.raises(SingularInformationError):
        _covariance(lambda u: float(u @ u), np.array([0.5, 1.0]))


class TestLoglikTopk:
    def test_k_equals_n(self, men_sample):
        m = ThresholdModel(0.7, 205.0)
        t = _topk(men_sample, men_sample.n)
        assert loglik_topk(m, t) == pytest.approx(loglik_full(m, men_sample), rel=1e-9)

    def test_k_one_forbidden(self, men_sample):
        with pytest.raises(ContractError):
            loglik_topk(MEN, _topk(men_sample, 1))

    def test_naive_oracle(self, men_sample):
        t = _topk(men_sample, 100)
        oracle = naive_topk(0.689, 209.28, 2100.0, list(t.top), N_MEN)
        assert loglik_topk(MEN, t) == pytest.approx(oracle, rel=1e-9)

    def test_censoring_at_threshold(self):
        t = TopKSample(2100.0, [2300.0, 2100.0], 5)
        assert loglik_topk(MEN, t) == -math.inf

    def test_ten_random_samples(self):
        for i in range(10):
            s = RatingSample("r", 2100.0, sample(WOMEN, 50 + 10 * i, seed=100 + i))
            m = ThresholdModel(0.6 + 0.02 * i, 190.0)
            assert loglik_topk(m, _topk(s, s.n)) == pytest.approx(loglik_full(m, s), rel=1e-9)

    def test_ties_keep_all_density_terms(self):
        t = TopKSample(0.0, [5.0, 3.0, 3.0], 10)
        m = ThresholdModel(1.0, 2.0, 0.0)
        expected = 7 * math.log(1 - math.exp(-1.5)) + sum(-x / 2.0 - math.log(2.0) for x in (5.0, 3.0, 3.0))
        assert loglik_topk(m, t) == pytest.approx(expected, rel=1e-12)

    def test_validation(self):
        with pytest.raises(ContractError):
            TopKSample(0.0, [1.0, 2.0], 5)
        with pytest.raises(ContractError):
            TopKSample(0.0, [3.0, 2.0, 1.0], 2)


class TestFitTopk:
    def test_top100_iceberg(self, men_sample, men_fit):
        fit = fit_topk(_topk(men_sample, 100))
        assert fit.method == "topk" and fit.k == 100 and fit.n == N_MEN
        assert abs(fit.model.a - 0.689) <= 4 * fit.se_a
        assert abs(fit.model.a - men_fit.model.a) <= 4 * fit.se_a

    def test_k_equals_n_matches_full(self, women_sample, women_fit):
        fit = fit_topk(_topk(women_sample, women_sample.n))
        assert fit.model.a == pytest.approx(women_fit.model.a, rel=1e-4)
        assert fit.model.theta == pytest.approx(women_fit.model.theta, rel=1e-4)

    def test_top50_exponential(self):
        s = RatingSample("e", 0.0, sample(ThresholdModel(1.0, 30.0, 0.0), 500, seed=21))
        fit = fit_topk(_topk(s, 50))
        assert abs(fit.model.a - 1.0) <= 4 * fit.se_a

    def test_too_few(self, men_sample):
        with pytest.raises(ContractError):
            fit_topk(_topk(men_sample, 5))


class TestDeltaMethod:
    def test_coordinate_projection(self, men_fit):
        est, se = delta_method(men_fit, lambda a, theta: theta)
        assert est == men_fit.model.theta
        assert se == pytest.approx(math.sqrt(men_fit.cov[1, 1]), rel=1e-9)

    def test_mean_se_men(self, men_fit):
        _, se = delta_method(men_fit, standard_foci(2100.0)["mu"])
        assert 0.7 <= se <= 1.4

    def test_median_se_women(self, women_fit):
        _, se = delta_method(women_fit, standard_foci(2100.0)["median"])
        assert 2.5 <= se <= 6.0

    def test_nonfinite_focus(self, men_fit):
        with pytest.raises(PropagationError):
            delta_method(men_fit, lambda a, theta: math.nan)

    def test_linear_focus_exact(self, men_fit):
        c = np.array([2.0, -0.5])
        _, se = delta_method(men_fit, lambda a, theta: c[0] * a + c[1] * theta)
        assert se == pytest.approx(math.sqrt(c @ men_fit.cov @ c), rel=1e-8)


class TestSharedTail:
    def test_identical_groups(self, women_sample, women_fit):
        res = fit_shared_tail([women_sample, women_sample])
        assert res.a_shared == pytest.approx(women_fit.model.a, rel=1e-7)
        t1, t2 = res.theta_by_group.values()
        assert t1 == t2

    def test_information_criteria(self, men_sample, women_sample):
        res = fit_shared_tail([men_sample, women_sample])
        n = men_sample.n + women_sample.n
        assert res.n_params == 3
        assert res.aic == pytest.approx(6 - 2 * res.loglik)
        assert res.bic == pytest.approx(3 * math.log(n) - 2 * res.loglik)
        assert res.separate_aic == pytest.approx(8 - 2 * res.separate_loglik)
        assert res.separate_loglik >= res.loglik - 1e-6
        assert res.cov.shape == (3, 3)

    def test_misspecification_detected(self):
        g1 = RatingSample("g1", 0.0, sample(ThresholdModel(0.5, 100.0, 0.0), 5000, seed=31))
        g2 = RatingSample("g2", 0.0, sample(ThresholdModel(1.0, 100.0, 0.0), 5000, seed=32))
        res = fit_shared_tail([g1, g2])
        assert res.separate_aic < res.aic

    def test_needs_two_groups(self, men_sample):
        with pytest.raises(ContractError):
            fit_shared_tail([men_sample])

    @pytest.mark.slow
    def test_common_tail_preferred(self):
        wins = 0
        for rep in range(50):
            g1 = RatingSample("m", 2100.0, sample(ThresholdModel(0.65, 209.28), 14671, seed=[1, rep]))
            g2 = RatingSample("w", 2100.0, sample(ThresholdModel(0.65, 194.86), 753, seed=[2, rep]))
            res = fit_shared_tail([g1, g2])
            wins += res.aic < res.separate_aic
        assert wins >= 40
