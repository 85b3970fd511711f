"""Closed-form quantities for the geometric and time-variance-minimizing laws.

Nothing here samples. All routines take a :class:`MomentSummary` and a
tuning parameter ``w`` from the feasibility interval ``(0, 2 z1 / z2)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import optimize

from .zmodels import MomentSummary

DEFAULT_TOL = 1e-12
MAX_SERIES_TERMS = 50_000_000

SQRT2 = math.sqrt(2.0)


class InfeasibleWError(ValueError):
    """w lies outside the feasibility interval (0, 2 z1/z2)."""


def check_feasible(w: float, m: MomentSummary) -> None:
    if not (0.0 < w < m.w_max):
        raise InfeasibleWError(f"w = {w!r} outside the feasibility interval (0, {m.w_max!r})")


def _stable_one_minus_sqrt(w: float, a1: float, a2: float) -> float:
    """1 - sqrt(1 - 2 w a1 + w^2 a2) without cancellation at small w."""
    eps = 2.0 * w * a1 - w * w * a2
    return eps / (1.0 + math.sqrt(1.0 - eps))


def success_probability(w: float, m: MomentSummary) -> float:
    """Success probability p_w of the variance-minimizing geometric law."""
    check_feasible(w, m)
    return _stable_one_minus_sqrt(w, m.z1, m.z2)


@dataclass(frozen=True)
class TuningPoint:
    w: float
    p_w: float
    expected_cost: float
    variance: float
    rel_variance: float
    tvp_rel: float

    @property
    def tvp(self) -> float:
        """Expected time-variance product in absolute units."""
        return self.expected_cost * self.variance


def tuning_point(w: float, m: MomentSummary) -> TuningPoint:
    p = success_probability(w, m)
    ratio = w * m.z1 / p  # >= 1 by the p_w sandwich
    # (ratio - 1)(ratio + 1) keeps digits when ratio is close to 1.
    rel_variance = (ratio - 1.0) * (ratio + 1.0)
    expected_cost = (1.0 - p) / p
    return TuningPoint(
        w=w,
        p_w=p,
        expected_cost=expected_cost,
        variance=rel_variance * m.beta**2,
        rel_variance=rel_variance,
        tvp_rel=expected_cost * rel_variance,
    )


def sweep_curve(m: MomentSummary, w_grid: Sequence[float]) -> list[TuningPoint]:
    grid = [float(w) for w in w_grid]
    for w in grid:
        if not 0.0 < w < m.w_max:
            raise InfeasibleWError(f"grid point w = {w!r} outside (0, {m.w_max!r})")
    if any(b <= a for a, b in zip(grid, grid[1:])):
        raise ValueError("w grid must be strictly increasing")
    return [tuning_point(w, m) for w in grid]


def asymptotic_sigma(m: MomentSummary) -> float:
    return m.sigma


def laplace_quantile(alpha: float) -> float:
    """Half-width t with P(|X| < t) = 1 - alpha for the unit-variance Laplace law."""
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")
    return -math.log(alpha) / SQRT2


def laplace_pdf(x):
    return np.exp(-SQRT2 * np.abs(x)) / SQRT2


def laplace_cdf(x):
    """CDF of the Laplace law with mean 0 and scale 1/sqrt(2)."""
    x = np.asarray(x, dtype=np.float64)
    half_tail = 0.5 * np.exp(-SQRT2 * np.abs(x))
    out = np.where(x < 0, half_tail, 1.0 - half_tail)
    return out if out.ndim else float(out)


# --- time-variance-minimizing law -------------------------------------------


@dataclass(frozen=True)
class TvmLaw:
    """Truncation law q_n = w (1-p_w)^n / sqrt(beta^2 + d_w n)."""

    w: float
    d_w: float
    p_w: float
    beta: float
    residual: float
    truncation_n: int

    def log_pmf(self, n):
        n = np.asarray(n, dtype=np.float64)
        out = math.log(self.w) + n * math.log1p(-self.p_w) - 0.5 * np.log(self.beta**2 + self.d_w * n)
        return out if out.ndim else float(out)

    def pmf(self, n):
        return np.exp(self.log_pmf(n))


def _geometric_cutoff(r: float, scale: float, tol: float) -> int:
    """Smallest n with scale * r^(n+1) / (1 - r) < tol."""
    if r <= 0.0:
        return 0
    n = math.log(tol * (1.0 - r) / scale) / math.log(r) - 1.0
    n = max(0, math.ceil(n))
    if n > MAX_SERIES_TERMS:
        raise ArithmeticError(f"series needs {n} terms (> {MAX_SERIES_TERMS}) to reach tol {tol}")
    return n


class _DefiningSum:
    """S(d) = sum_n w (1-p)^n / sqrt(beta^2 + d n), truncated with tail < tol/10."""

    def __init__(self, w: float, p: float, beta: float, tol: float):
        self.w, self.p, self.beta = w, p, beta
        # Terms are bounded by w (1-p)^n / beta for every d >= 0.
        self.cutoff = _geometric_cutoff(1.0 - p, w / beta, tol / 10.0)
        n = np.arange(self.cutoff + 1, dtype=np.float64)
        self.n = n
        self.geo = w * np.exp(n * math.log1p(-p))

    def __call__(self, d: float) -> float:
        return float(np.sum(self.geo / np.sqrt(self.beta**2 + d * self.n)))


def d_w_upper_bound(w: float, p: float, m: MomentSummary) -> float:
    """Upper bound on 1 + d_w z1^2, valid when w z1 < 1.

    Dropping the n = 0 term of the defining sum and bounding the rest by its
    n = 1 denominator gives sqrt(1 + d_w z1^2) <= (1-p) w z1 / (p (1 - w z1)).
    """
    return ((1.0 - p) * w * m.z1 / (p * (1.0 - w * m.z1))) ** 2


def solve_time_variance_weight(w: float, m: MomentSummary, tol: float = DEFAULT_TOL) -> TvmLaw:
    """Find d_w > 0 normalising the time-variance-minimizing law."""
    if not tol > 0:
        raise ValueError("tol must be positive")
    p = success_probability(w, m)
    beta = m.beta
    s = _DefiningSum(w, p, beta, tol)
    s0 = s(0.0)
    # Analytically s0 = w z1 / p >= 1.
    if s0 < 1.0 - tol:
        raise AssertionError(f"defining sum at d = 0 is {s0!r} < 1")
    if abs(s0 - 1.0) < tol:
        return TvmLaw(w, 0.0, p, beta, s0 - 1.0, s.cutoff)

    wz = w * m.z1
    if wz < 1.0:
        d_hi = (d_w_upper_bound(w, p, m) - 1.0) / m.z1**2
        d_hi = max(d_hi * (1.0 + 1e-9), np.finfo(float).tiny)
    else:
        d_hi = beta**2
    while s(d_hi) > 1.0:
        d_hi *= 2.0

    d_w = optimize.brentq(lambda d: s(d) - 1.0, 0.0, d_hi, xtol=1e-300, rtol=4 * np.finfo(float).eps, maxiter=500)
    residual = s(d_w) - 1.0
    if abs(residual) >= tol:
        raise ArithmeticError(f"d_w solve stalled with residual {residual!r} >= tol {tol!r}")
    return TvmLaw(w=w, d_w=d_w, p_w=p, beta=beta, residual=residual, truncation_n=s.cutoff)


def tvm_pmf(n: int, law: TvmLaw) -> float:
    if n < 0:
        raise ValueError(f"n must be non-negative, got {n}")
    return float(law.pmf(n))


def _sum_n_r_pow_n_from(r: float, start: int) -> float:
    """sum_{n >= start} n r^n in closed form."""
    return r**start * (start - (start - 1) * r) / (1.0 - r) ** 2


@dataclass(frozen=True)
class TvmSeries:
    expected_cost: float
    second_moment: float
    variance: float
    tvp: float
    cutoff: int


def tvm_series(law: TvmLaw, m: MomentSummary, tol: float = DEFAULT_TOL) -> TvmSeries:
    """E N, E beta~^2 and Var beta~ under the TVM law by certified series.

    With E(1 - w Z)^2 = (1 - p_w)^2 the second-moment terms reduce to
    w (1-p_w)^n sqrt(beta^2 + d_w n); both series have ratio (1 - p_w).
    """
    w, p, d, beta = law.w, law.p_w, law.d_w, law.beta
    r = 1.0 - p
    n_cut = max(law.truncation_n, 16)
    while True:
        if n_cut > MAX_SERIES_TERMS:
            raise ArithmeticError(f"TVM series did not reach tol {tol} within {MAX_SERIES_TERMS} terms")
        start = n_cut + 1
        # n r^n / sqrt(beta^2 + d n) <= n r^n / beta
        tail_cost = (w / beta) * _sum_n_r_pow_n_from(r, start)
        # sqrt(beta^2 + d n) <= sqrt(beta^2 + d start) * n / start for n >= start
        tail_m2 = w * math.sqrt(beta**2 + d * start) / start * _sum_n_r_pow_n_from(r, start)
        if tail_cost < tol and tail_m2 < tol * beta**2:
            break
        n_cut *= 2
    n = np.arange(n_cut + 1, dtype=np.float64)
    geo = np.exp(n * math.log1p(-p))
    root = np.sqrt(beta**2 + d * n)
    expected_cost = float(np.sum(n * w * geo / root))
    second_moment = float(w * np.sum(geo * root))
    variance = second_moment - beta**2
    return TvmSeries(expected_cost, second_moment, variance, expected_cost * variance, n_cut)


def tvm_tvp_exact(law: TvmLaw, m: MomentSummary, tol: float = DEFAULT_TOL) -> float:
    """E N~ * Var beta~ under the TVM law, in absolute units."""
    return tvm_series(law, m, tol).tvp


def w_for_success_probability(p: float, m: MomentSummary) -> float:
    """The smaller root w of p_w = p, for 0 < p <= max_w p_w."""
    p_max = 1.0 - math.sqrt(1.0 - m.z1**2 / m.z2)
    if not 0.0 < p <= p_max:
        raise ValueError(f"p = {p!r} not attainable; p_w ranges over (0, {p_max!r}]")
    c = p * (2.0 - p)  # 1 - (1-p)^2
    disc = max(m.z1**2 - m.z2 * c, 0.0)
    return c / (m.z1 + math.sqrt(disc))


def w_for_expected_cost(expected_cost: float, m: MomentSummary) -> float:
    """w on the small-w branch with E N = 1/p_w - 1 equal to ``expected_cost``."""
    if not expected_cost > 0:
        raise ValueError("expected cost must be positive")
    return w_for_success_probability(1.0 / (expected_cost + 1.0), m)
