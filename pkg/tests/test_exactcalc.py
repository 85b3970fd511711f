import math

import mpmath
import numpy as np
import pytest

from reciprocal_mc.exactcalc import (
    InfeasibleWError,
    _DefiningSum,
    asymptotic_sigma,
    d_w_upper_bound,
    laplace_cdf,
    laplace_quantile,
    solve_time_variance_weight,
    success_probability,
    sweep_curve,
    tuning_point,
    tvm_pmf,
    tvm_series,
    tvm_tvp_exact,
    w_for_expected_cost,
    w_for_success_probability,
)
from reciprocal_mc.validation import random_pairs
from reciprocal_mc.zmodels import Bernoulli, DiscreteFinite, MomentSummary, ScaledUniform

RARE = Bernoulli(0.001).moments()
HALF = Bernoulli(0.5).moments()


def _mp_p(w, m, dps=50):
    with mpmath.workdps(dps):
        w = mpmath.mpf(w)
        return float(1 - mpmath.sqrt(1 - 2 * w * mpmath.mpf(m.z1) + w * w * mpmath.mpf(m.z2)))


class TestSuccessProbability:
    def test_rare_event_value(self):
        assert success_probability(1.0, RARE) == pytest.approx(5.00125e-4, rel=1e-6)
        assert success_probability(1.0, RARE) == pytest.approx(_mp_p(1.0, RARE), rel=1e-14)

    @pytest.mark.parametrize("m", [RARE, HALF, ScaledUniform(2.0).moments()])
    def test_maximum_at_ratio(self, m):
        w_star = m.z1 / m.z2
        p_max = 1 - math.sqrt(1 - m.z1**2 / m.z2)
        assert success_probability(w_star, m) == pytest.approx(p_max, rel=1e-12)
        for w in np.linspace(0.01, 0.99, 50) * m.w_max:
            assert success_probability(w, m) <= p_max * (1 + 1e-12)

    def test_small_w_is_accurate(self):
        # 1 - sqrt(1 - eps) in double precision would lose every digit here.
        for w in (1e-6, 1e-9, 1e-12):
            assert success_probability(w, HALF) == pytest.approx(_mp_p(w, HALF), rel=1e-13)

    def test_ratio_tends_to_one(self):
        m = ScaledUniform(3.0).moments()
        ratios = [success_probability(f * m.z1 / m.z2, m) / (f * m.z1 / m.z2 * m.z1) for f in (1e-2, 1e-4, 1e-6)]
        assert ratios[0] < ratios[1] < ratios[2] < 1.0
        assert 1.0 - ratios[2] < 1e-6

    @pytest.mark.parametrize("w", [0.0, -0.1, 2.0, 3.0])
    def test_infeasible(self, w):
        with pytest.raises(InfeasibleWError, match=r"\(0, 2"):
            success_probability(w, HALF)

    def test_sandwich_random_pairs(self):
        for model, w in random_pairs(1000, seed=2):
            m = model.moments()
            p = success_probability(w, m)
            assert m.z1 - w * m.z2 / 2 <= p / w < m.z1


class TestTuningPoint:
    def test_w_one(self):
        t = tuning_point(1.0, RARE)
        assert t.rel_variance == pytest.approx(2.998, abs=5e-4)
        assert t.expected_cost == pytest.approx(1998.5, abs=0.05)
        assert t.tvp_rel == pytest.approx(5991, abs=1)

    def test_w_tenth(self):
        t = tuning_point(0.1, RARE)
        assert t.rel_variance == pytest.approx(0.1079, abs=5e-5)
        assert t.expected_cost == pytest.approx(1.0525e4, rel=1e-4)
        assert t.tvp_rel == pytest.approx(1.136e3, rel=1e-3)

    def test_small_w_limit(self):
        assert tuning_point(1e-4, RARE).tvp_rel == pytest.approx(999, rel=1e-3)

    def test_closed_forms_agree_with_extended_precision(self):
        for model, w in random_pairs(200, seed=9):
            m = model.moments()
            t = tuning_point(w, m)
            p = _mp_p(w, m)
            assert t.variance == pytest.approx(w * w / p**2 - m.beta**2, rel=1e-8, abs=1e-12 * m.beta**2)
            assert t.expected_cost == pytest.approx(1 / p - 1, rel=1e-10)

    def test_tvp_in_absolute_units(self):
        t = tuning_point(0.3, HALF)
        assert t.tvp == pytest.approx(t.tvp_rel * HALF.beta**2)


class TestSweepCurve:
    def test_monotone_on_coarse_grid(self):
        pts = sweep_curve(RARE, np.arange(1, 10) * 0.2)
        assert np.all(np.diff([p.rel_variance for p in pts]) > 0)
        assert np.all(np.diff([p.tvp_rel for p in pts]) > 0)

    def test_single_point_is_max(self):
        (pt,) = sweep_curve(HALF, [HALF.z1 / HALF.z2])
        assert pt.p_w == pytest.approx(1 - math.sqrt(1 - HALF.z1**2 / HALF.z2))

    def test_names_offending_point(self):
        with pytest.raises(InfeasibleWError, match="2.5"):
            sweep_curve(HALF, [0.5, 2.5])

    def test_requires_increasing_grid(self):
        with pytest.raises(ValueError):
            sweep_curve(HALF, [0.5, 0.4])


class TestSigmaAndLaplace:
    def test_sigma_values(self):
        assert asymptotic_sigma(RARE) ** 2 == pytest.approx(9.99e8, rel=1e-12)
        assert asymptotic_sigma(HALF) == pytest.approx(2.0)
        assert asymptotic_sigma(ScaledUniform(2.0).moments()) == pytest.approx(0.5774, abs=1e-4)

    def test_quantile_values(self):
        assert laplace_quantile(0.05) == pytest.approx(2.11830, abs=1e-5)
        assert laplace_quantile(math.exp(-math.sqrt(2))) == pytest.approx(1.0, abs=1e-15)
        assert laplace_quantile(1 - 1e-12) < 1e-11

    def test_quantile_mass(self):
        for alpha in np.linspace(0.01, 0.99, 30):
            t = laplace_quantile(alpha)
            assert laplace_cdf(t) - laplace_cdf(-t) == pytest.approx(1 - alpha, abs=1e-14)

    @pytest.mark.parametrize("alpha", [0.0, 1.0, -0.5])
    def test_quantile_domain(self, alpha):
        with pytest.raises(ValueError):
            laplace_quantile(alpha)


class TestTimeVarianceWeight:
    def test_sum_at_zero(self):
        for model, w in random_pairs(50, seed=4):
            m = model.moments()
            p = success_probability(w, m)
            assert _DefiningSum(w, p, m.beta, 1e-13)(0.0) == pytest.approx(w * m.z1 / p, rel=1e-10)

    def test_self_consistent_root(self):
        law = solve_time_variance_weight(0.5, HALF, 1e-12)
        assert abs(law.residual) < 1e-12
        s = _DefiningSum(0.5, law.p_w, law.beta, 1e-12)
        assert s(law.d_w) == pytest.approx(1.0, abs=1e-12)
        assert s(law.d_w / 2) > 1.0 > s(2 * law.d_w)

    def test_d_w_is_order_w_squared(self):
        ratios = []
        for f in (0.1, 0.05, 0.025):
            w = f * HALF.z1 / HALF.z2
            ratios.append(solve_time_variance_weight(w, HALF).d_w / w**2)
        assert max(ratios) / min(ratios) < 1.2
        assert ratios[0] > ratios[1] > ratios[2]

    def test_corrected_upper_bound(self):
        for model, w in random_pairs(300, seed=3):
            m = model.moments()
            if w * m.z1 >= 1.0:
                continue
            law = solve_time_variance_weight(w, m)
            assert 1 + law.d_w * m.z1**2 <= d_w_upper_bound(w, law.p_w, m) * (1 + 1e-12)

    def test_bound_without_ratio_factor_fails(self):
        # ((1-p)/(1-w z1))^2 alone is not an upper bound: the (w z1/p)^2 factor is needed.
        w = 0.1 * HALF.z1 / HALF.z2
        law = solve_time_variance_weight(w, HALF)
        assert 1 + law.d_w * HALF.z1**2 > ((1 - law.p_w) / (1 - w * HALF.z1)) ** 2

    def test_rejects_bad_tol(self):
        with pytest.raises(ValueError):
            solve_time_variance_weight(0.5, HALF, 0.0)


@pytest.fixture(scope="module")
def law():
    return solve_time_variance_weight(0.3, HALF)


class TestTvmPmf:
    def test_first_term(self, law):
        assert tvm_pmf(0, law) == pytest.approx(0.3 * HALF.z1, rel=1e-14)

    def test_normalised(self, law):
        n = np.arange(law.truncation_n + 1)
        assert float(np.sum(law.pmf(n))) == pytest.approx(1.0, abs=1e-12)

    def test_envelope(self, law):
        n = np.arange(10_001)
        log_geo = math.log(law.p_w) + n * math.log1p(-law.p_w)
        ratio = np.exp(law.log_pmf(n) - log_geo)
        assert np.all(ratio <= 0.3 * HALF.z1 / law.p_w * (1 + 1e-12))
        assert np.all(np.diff(ratio) < 0)

    def test_negative_n(self, law):
        with pytest.raises(ValueError):
            tvm_pmf(-1, law)


class TestTvmTvp:
    @pytest.mark.parametrize(
        "model", [HALF, Bernoulli(0.1).moments(), ScaledUniform(2.0).moments(),
                  DiscreteFinite((0.0, 2.0, 5.0), (0.5, 0.3, 0.2)).moments()],
    )
    def test_sandwich(self, model):
        m = model
        for f in (0.5, 0.1, 0.01):
            w = f * m.z1 / m.z2
            law = solve_time_variance_weight(w, m)
            geo = tuning_point(w, m).tvp
            tvp = tvm_tvp_exact(law, m)
            assert geo / math.sqrt(1 + 2 * law.d_w * m.z1**2 / law.p_w) <= tvp <= geo

    def test_gap_closes_linearly(self):
        devs = []
        for f in (0.1, 0.01, 0.001):
            w = f * HALF.z1 / HALF.z2
            law = solve_time_variance_weight(w, HALF)
            devs.append(1 - tvm_tvp_exact(law, HALF) / tuning_point(w, HALF).tvp)
        assert devs[0] > devs[1] > devs[2] > 0
        # Deviation is O(w): a tenfold smaller w gives roughly a tenfold smaller gap.
        assert 5 < devs[0] / devs[1] < 20 and 5 < devs[1] / devs[2] < 20

    def test_series_fields_consistent(self):
        law = solve_time_variance_weight(0.2, HALF)
        s = tvm_series(law, HALF)
        assert s.tvp == pytest.approx(s.expected_cost * s.variance)
        assert s.variance == pytest.approx(s.second_moment - HALF.beta**2)


class TestInverseMaps:
    def test_expected_cost_roundtrip(self):
        for cost in (2000.0, 1e4, 1e6):
            w = w_for_expected_cost(cost, RARE)
            assert tuning_point(w, RARE).expected_cost == pytest.approx(cost, rel=1e-9)
            assert w <= RARE.z1 / RARE.z2

    def test_success_probability_roundtrip(self):
        m = MomentSummary(1.0, 4.0 / 3.0)
        for p in (1e-8, 1e-3, 0.3):
            assert success_probability(w_for_success_probability(p, m), m) == pytest.approx(p, rel=1e-9)

    def test_unattainable(self):
        with pytest.raises(ValueError):
            w_for_success_probability(0.9, HALF)
