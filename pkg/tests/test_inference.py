import math

import numpy as np
import pytest

from reciprocal_mc.estimator import EstimateDraw, TruncationLaw, replicate
from reciprocal_mc.exactcalc import InfeasibleWError, laplace_quantile, success_probability
from reciprocal_mc.experiments import convergence_point, ratio_study
from reciprocal_mc.inference import (
    ks_statistic,
    laplace_cdf,
    laplace_ci,
    laplace_half_width,
    normal_cdf,
    ratio_ci,
    ratio_estimate,
    sample_excess_kurtosis,
    standardized_errors,
)
from reciprocal_mc.zmodels import Bernoulli, ScaledUniform

HALF = Bernoulli(0.5).moments()


class TestLaplaceCI:
    def test_half_width_value(self):
        ci = laplace_ci(2.0, 0.01, HALF, 0.05)
        assert ci.half_width == pytest.approx(2.11830 * 2 * math.sqrt(0.005), rel=1e-5)
        assert ci.center == 2.0 and ci.method == "laplace-asymptotic"
        assert ci.contains(2.0)

    def test_alpha_near_one_collapses(self):
        ci = laplace_ci(3.0, 0.01, HALF, 1 - 1e-12)
        assert ci.half_width < 1e-12

    def test_infeasible(self):
        with pytest.raises(InfeasibleWError):
            laplace_ci(1.0, 5.0, HALF)

    def test_width_shrinks_with_w(self):
        widths = [laplace_half_width(w, HALF, 0.05) for w in (0.1, 0.01, 0.001)]
        assert widths[0] > widths[1] > widths[2]
        assert widths[0] / widths[1] == pytest.approx(math.sqrt(10))

    @pytest.mark.parametrize("model", [Bernoulli(0.5), ScaledUniform(2.0)], ids=lambda m: m.spec())
    def test_coverage(self, model):
        m = model.moments()
        w = 1e-3 / m.z1
        law = TruncationLaw.geometric(success_probability(w, m))
        s = replicate(w, law, model, 10_000, seed=71)
        h = laplace_half_width(w, m, 0.05)
        assert 0.93 <= np.mean(np.abs(s.values - m.beta) <= h) <= 0.97


class TestRatioEstimator:
    def test_constant_sample(self):
        assert ratio_estimate([0.25] * 10) == 4.0

    def test_zero_mean_is_undefined(self):
        assert math.isnan(ratio_estimate([0.0, 0.0]))

    def test_empty(self):
        with pytest.raises(ValueError):
            ratio_estimate([])

    def test_ci_contains_truth_on_easy_sample(self):
        rng = np.random.default_rng(0)
        ci = ratio_ci(rng.uniform(0, 2, 10_000))
        assert ci.method == "normal-delta" and ci.contains(1.0)

    def test_ci_errors(self):
        with pytest.raises(ValueError):
            ratio_ci([1.0])
        with pytest.raises(ValueError):
            ratio_ci([0.0, 0.0])

    def test_bias_tracks_prediction(self):
        study = ratio_study(Bernoulli(0.5), n=100, reps=100_000, seed=5)
        assert study.predicted_bias == pytest.approx(0.02)
        assert abs(study.bias - study.predicted_bias) <= 4 * study.bias_se
        assert study.undefined == 0

    def test_scaled_variance(self):
        study = ratio_study(Bernoulli(0.5), n=2000, reps=20_000, seed=6)
        assert study.sigma2 == pytest.approx(4.0)
        assert study.scaled_variance == pytest.approx(4.0, rel=0.08)


class TestStandardizedErrors:
    def test_center(self):
        x = standardized_errors([EstimateDraw(2.0, 3, 3, 0.01)], 0.01, HALF)
        assert x[0] == 0.0

    def test_mixed_w_rejected(self):
        with pytest.raises(ValueError):
            standardized_errors([EstimateDraw(1.0, 0, 0, 0.1), EstimateDraw(1.0, 0, 0, 0.2)], 0.1, HALF)

    def test_array_and_draws_agree(self):
        draws = [EstimateDraw(v, 1, 1, 0.02) for v in (1.0, 2.5, -0.5)]
        a = standardized_errors(draws, 0.02, HALF)
        b = standardized_errors(np.array([1.0, 2.5, -0.5]), 0.02, HALF)
        assert np.array_equal(a, b)

    def test_laplace_shape_at_small_w(self):
        pt = convergence_point(Bernoulli(0.1), 1e3, reps=10_000, seed=7)
        assert pt.variance == pytest.approx(1.0, rel=0.08)
        assert 2.2 < pt.excess_kurtosis < 4.0
        assert pt.ks_laplace < 0.05 < pt.ks_normal


class TestKS:
    def test_single_point(self):
        assert ks_statistic([0.0], laplace_cdf) == pytest.approx(0.5)

    @pytest.mark.parametrize("n", [1, 10, 997])
    def test_quantile_placement(self, n):
        u = (np.arange(1, n + 1) - 0.5) / n
        x = np.where(u < 0.5, np.log(2 * u), -np.log(2 * (1 - u))) / math.sqrt(2)
        assert ks_statistic(x, laplace_cdf) == pytest.approx(0.5 / n, rel=1e-9)

    def test_laplace_draws(self):
        x = np.random.default_rng(4).laplace(0.0, 1 / math.sqrt(2), 100_000)
        assert ks_statistic(x, laplace_cdf) < 0.006

    def test_normal_draws_rejected_by_laplace(self):
        x = np.random.default_rng(4).standard_normal(100_000)
        assert ks_statistic(x, normal_cdf) < 0.006
        assert ks_statistic(x, laplace_cdf) > 0.03

    def test_empty(self):
        with pytest.raises(ValueError):
            ks_statistic([], laplace_cdf)


class TestLaplaceCdf:
    def test_symmetry(self):
        x = np.random.default_rng(3).uniform(-20, 20, 10_000)
        assert np.allclose(laplace_cdf(-x), 1 - laplace_cdf(x), atol=1e-15)
        assert laplace_cdf(0.0) == 0.5

    def test_quantile_consistency(self):
        for alpha in (0.01, 0.05, 0.2):
            t = laplace_quantile(alpha)
            assert laplace_cdf(t) - laplace_cdf(-t) == pytest.approx(1 - alpha, abs=1e-14)


def test_normal_kurtosis_near_zero():
    x = np.random.default_rng(1).standard_normal(200_000)
    assert abs(sample_excess_kurtosis(x)) < 0.05
