"""Experiment drivers shared by the CLI, the validation suites and the tests.

Each driver is deterministic in ``seed``: replication ``i`` always uses
stream ``(seed, i)``, and aggregates are reduced over index-ordered arrays,
so ``workers`` never changes a result.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np
from scipy import stats

from . import adaptive
from .estimator import ReplicationSummary, TruncationLaw, estimate_from, replicate, run_indexed
from .exactcalc import (
    TuningPoint,
    solve_time_variance_weight,
    success_probability,
    sweep_curve,
    laplace_quantile,
    tuning_point,
    w_for_expected_cost,
)
from .inference import (
    ks_statistic,
    laplace_cdf,
    laplace_half_width,
    normal_cdf,
    sample_excess_kurtosis,
    standardized_errors,
)
from .zmodels import MomentSummary, RandomStream, ZModel

REFERENCE_ADAPTIVE_TVP_REL = 3969.75


def make_law(kind: str, w: float, model: ZModel, p_scale: float = 1.0) -> TruncationLaw:
    """Truncation law by name: ``geometric`` (p_scale * p_w) or ``tvm``."""
    m = model.moments()
    if kind == "geometric":
        return TruncationLaw.geometric(p_scale * success_probability(w, m))
    if kind == "tvm":
        return TruncationLaw.time_variance_minimizing(solve_time_variance_weight(w, m))
    raise ValueError(f"unknown law {kind!r}; expected 'geometric' or 'tvm'")


# --- curve -------------------------------------------------------------------


def curve(model: ZModel, wmin: float, wmax: float, points: int) -> list[TuningPoint]:
    if points < 1:
        raise ValueError("points must be >= 1")
    grid = np.linspace(wmin, wmax, points) if points > 1 else np.array([wmin])
    return sweep_curve(model.moments(), grid)


# --- replicated draws ---------------------------------------------------------


@dataclass
class EstimateReport:
    w: float
    law: str
    alpha: float
    summary: ReplicationSummary
    beta: float
    half_width: float
    coverage: float

    def rows(self):
        for i, (v, n) in enumerate(zip(self.summary.values, self.summary.n_used)):
            yield {"index": i, "value": float(v), "n_used": int(n),
                   "ci_lower": float(v - self.half_width), "ci_upper": float(v + self.half_width)}


def estimate(model: ZModel, w: float, law_kind: str, reps: int, seed: int,
             alpha: float = 0.05, p_scale: float = 1.0, workers: int = 1) -> EstimateReport:
    m = model.moments()
    law = make_law(law_kind, w, model, p_scale)
    s = replicate(w, law, model, reps, seed, workers=workers)
    h = laplace_half_width(w, m, alpha)
    covered = np.abs(s.values - m.beta) <= h
    return EstimateReport(w, law.describe(), alpha, s, m.beta, h, float(np.mean(covered)))


# --- Laplace convergence --------------------------------------------------------


@dataclass
class ConvergencePoint:
    expected_cost: float
    w: float
    reps: int
    ks_laplace: float
    ks_normal: float
    variance: float
    excess_kurtosis: float
    coverage: float
    mean_error: float


def convergence_point(model: ZModel, expected_cost: float, reps: int, seed: int,
                      alpha: float = 0.05, workers: int = 1) -> ConvergencePoint:
    m = model.moments()
    w = w_for_expected_cost(expected_cost, m)
    law = TruncationLaw.geometric(success_probability(w, m))
    s = replicate(w, law, model, reps, seed, workers=workers)
    x = standardized_errors(s.values, w, m)
    t = -math.log(alpha) / math.sqrt(2.0)
    return ConvergencePoint(
        expected_cost=expected_cost,
        w=w,
        reps=reps,
        ks_laplace=ks_statistic(x, laplace_cdf),
        ks_normal=ks_statistic(x, normal_cdf),
        variance=float(np.var(x, ddof=1)),
        excess_kurtosis=sample_excess_kurtosis(x),
        coverage=float(np.mean(np.abs(x) <= t)),
        mean_error=float(np.mean(x)),
    )


def convergence(model: ZModel, expected_costs, reps: int, seed: int, alpha: float = 0.05,
                workers: int = 1) -> list[ConvergencePoint]:
    return [convergence_point(model, c, reps, seed, alpha, workers) for c in expected_costs]


# --- ratio estimator -----------------------------------------------------------


def _ratio_range(model, n, seed, start, stop):
    out = np.empty(stop - start)
    for j, i in enumerate(range(start, stop)):
        zbar = float(np.mean(model.sample(RandomStream(seed, i), n)))
        out[j] = 1.0 / zbar if zbar > 0 else math.nan
    return (out,)


@dataclass
class RatioStudy:
    n: int
    reps: int
    undefined: int
    mean: float
    bias: float
    bias_se: float
    predicted_bias: float
    scaled_variance: float  # n * Var(1/Zbar)
    scaled_variance_se: float
    sigma2: float


def ratio_study(model: ZModel, n: int, reps: int, seed: int, workers: int = 1) -> RatioStudy:
    """Bias and n-scaled variance of 1/Zbar_n over ``reps`` replications."""
    m = model.moments()
    (est,) = run_indexed(_ratio_range, (model, n, seed), reps, workers)
    ok = est[~np.isnan(est)]
    mean = float(np.mean(ok))
    var = float(np.var(ok, ddof=1))
    centered = ok - mean
    m4 = float(np.mean(centered**4))
    return RatioStudy(
        n=n,
        reps=reps,
        undefined=int(reps - ok.size),
        mean=mean,
        bias=mean - m.beta,
        bias_se=math.sqrt(var / ok.size),
        predicted_bias=m.var / (n * m.z1**3),
        scaled_variance=n * var,
        scaled_variance_se=n * math.sqrt(max(m4 - var * var, 0.0) / ok.size),
        sigma2=m.sigma**2,
    )


# --- adaptive ------------------------------------------------------------------


@dataclass
class AdaptiveReport:
    """Summary of the two-phase experiment.

    ``tvp_rel`` is (k + mean 1/P_k) * sample Var(beta^(w_k)) / beta^2, and
    ``tvp_rel_band`` its normal-theory band from the sample fourth moment.
    The ``conditional_*`` fields average the exact conditional TVP over
    pilots; pilots whose conditional variance diverges are counted apart.
    """

    k: int
    reps: int
    epsilon: float
    mean_estimate: float
    estimate_se: float
    beta: float
    expected_total_cost: float
    mean_inv_p_over_k: float
    median_k_p: float
    sample_variance: float
    tvp_rel: float
    tvp_rel_band: tuple[float, float]
    band_level: float
    target_tvp_rel: float
    reference_tvp_rel: float
    conditional_tvp_rel_mean: float
    conditional_tvp_rel_se: float
    conditional_nonfinite: int
    degenerate_pilots: int
    mean_z_draws: float
    alpha: float
    sigma_source: str
    ci_coverage: float
    ci_undefined: int

    @property
    def reference_value_in_band(self) -> bool:
        lo, hi = self.tvp_rel_band
        return lo <= self.reference_tvp_rel <= hi

    def as_dict(self) -> dict:
        d = asdict(self)
        d["tvp_rel_band"] = list(self.tvp_rel_band)
        d["reference_value_in_band"] = self.reference_value_in_band
        return d


def _adaptive_coverage(run: adaptive.AdaptiveRun, m: MomentSummary, alpha: float, sigma_source: str):
    covered = []
    undefined = 0
    for i in range(run.reps):
        if sigma_source == "analytic":
            mi = m
        else:
            try:
                mi = MomentSummary(float(run.m1[i]), float(run.m2[i]))
            except ValueError:
                undefined += 1
                continue
        h = laplace_quantile(alpha) * mi.sigma * math.sqrt(run.w_k[i] * mi.z1)
        covered.append(abs(run.values[i] - m.beta) <= h)
    return (float(np.mean(covered)) if covered else math.nan), undefined


def adaptive_experiment(model: ZModel, k: int, reps: int, seed: int, epsilon: float | None = None,
                        band_level: float = 0.95, alpha: float = 0.05, sigma_source: str = "pilot",
                        workers: int = 1) -> AdaptiveReport:
    """Run the two-phase estimator ``reps`` times with pilot size ``k``.

    ``sigma_source`` picks the moments behind the per-draw Laplace interval:
    ``"pilot"`` plugs in (M1, M2), ``"analytic"`` uses the model's moments.
    """
    if sigma_source not in ("pilot", "analytic"):
        raise ValueError(f"sigma_source must be 'pilot' or 'analytic', got {sigma_source!r}")
    m = model.moments()
    eps = 1.0 / model.bound if epsilon is None else epsilon
    run = adaptive.run_adaptive(model, k, eps, reps, seed, workers=workers)
    beta2 = m.beta**2

    inv_p = 1.0 / run.p_k
    cost = k + float(np.mean(inv_p))
    cost_se = float(np.std(inv_p, ddof=1)) / math.sqrt(reps)
    var = float(np.var(run.values, ddof=1))
    m4 = float(np.mean((run.values - np.mean(run.values)) ** 4))
    var_se = math.sqrt(max(m4 - var * var, 0.0) / reps)
    tvp = cost * var / beta2
    tvp_se = math.hypot(cost * var_se, var * cost_se) / beta2
    z = stats.norm.ppf(0.5 + band_level / 2.0)

    ctvp = np.array([adaptive.conditional_tvp(run.pilot(i), m) for i in range(reps)]) / beta2
    finite = np.isfinite(ctvp)
    coverage, undefined = _adaptive_coverage(run, m, alpha, sigma_source)
    return AdaptiveReport(
        k=k,
        reps=reps,
        epsilon=eps,
        mean_estimate=float(np.mean(run.values)),
        estimate_se=float(np.std(run.values, ddof=1)) / math.sqrt(reps),
        beta=m.beta,
        expected_total_cost=cost,
        mean_inv_p_over_k=float(np.mean(inv_p)) / k,
        median_k_p=float(np.median(k * run.p_k)),
        sample_variance=var,
        tvp_rel=tvp,
        tvp_rel_band=(float(tvp - z * tvp_se), float(tvp + z * tvp_se)),
        band_level=band_level,
        target_tvp_rel=4.0 * m.rel_var,
        reference_tvp_rel=REFERENCE_ADAPTIVE_TVP_REL,
        conditional_tvp_rel_mean=float(np.mean(ctvp[finite])),
        conditional_tvp_rel_se=float(np.std(ctvp[finite], ddof=1)) / math.sqrt(max(finite.sum(), 1)),
        conditional_nonfinite=int((~finite).sum()),
        degenerate_pilots=int(run.degenerate.sum()),
        mean_z_draws=k + float(np.mean(run.n_used)),
        alpha=alpha,
        sigma_source=sigma_source,
        ci_coverage=coverage,
        ci_undefined=undefined,
    )


# --- more is not better: one long draw vs a k-mean --------------------------------


def _kmean_range(w, law, model, k, seed, start, stop):
    out = np.empty(stop - start)
    for j, i in enumerate(range(start, stop)):
        base = RandomStream(seed, i)
        out[j] = np.mean([estimate_from(w, law, model, base.child(r)).value for r in range(k)])
    return (out,)


@dataclass
class DominanceStudy:
    w: float
    k: int
    w_star: float
    kmean_variance: float
    kmean_variance_se: float
    single_variance: float
    single_variance_se: float
    exact_kmean_variance: float
    exact_single_variance: float


def _var_and_se(x: np.ndarray) -> tuple[float, float]:
    var = float(np.var(x, ddof=1))
    m4 = float(np.mean((x - np.mean(x)) ** 4))
    return var, math.sqrt(max(m4 - var * var, 0.0) / x.size)


def dominance_study(model: ZModel, w: float, k: int, reps: int, seed: int, workers: int = 1) -> DominanceStudy:
    """Compare the mean of k draws at w with one draw at w* of equal expected cost."""
    m = model.moments()
    tp = tuning_point(w, m)
    w_star = w_for_expected_cost(k * tp.expected_cost, m)
    law = TruncationLaw.geometric(tp.p_w)
    (kmeans,) = run_indexed(_kmean_range, (w, law, model, k, seed), reps, workers)
    star = replicate(w_star, TruncationLaw.geometric(success_probability(w_star, m)), model, reps,
                     (seed + 1) % 2**64, workers=workers)
    kv, kse = _var_and_se(kmeans)
    sv, sse = _var_and_se(star.values)
    return DominanceStudy(w, k, w_star, kv, kse, sv, sse, tp.variance / k, tuning_point(w_star, m).variance)
