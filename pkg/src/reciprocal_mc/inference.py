"""Confidence intervals, the ratio estimator and distributional diagnostics."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

import numpy as np
from scipy import stats

from .estimator import EstimateDraw
from .exactcalc import check_feasible, laplace_cdf, laplace_quantile
from .zmodels import MomentSummary


@dataclass(frozen=True)
class ConfidenceInterval:
    center: float
    lower: float
    upper: float
    alpha: float
    method: str  # "laplace-asymptotic" or "normal-delta"

    @property
    def half_width(self) -> float:
        return 0.5 * (self.upper - self.lower)

    def contains(self, x: float) -> bool:
        return self.lower <= x <= self.upper


def laplace_half_width(w: float, m: MomentSummary, alpha: float) -> float:
    return laplace_quantile(alpha) * m.sigma * math.sqrt(w * m.z1)


def laplace_ci(draw_value: float, w: float, m: MomentSummary, alpha: float = 0.05) -> ConfidenceInterval:
    """Asymptotic 1 - alpha interval around a single draw at small w.

    ``m`` supplies sigma and E Z: pass analytic moments in validation runs,
    or pilot moments (``MomentSummary(M1, M2)``) as a plug-in.
    """
    check_feasible(w, m)
    h = laplace_half_width(w, m, alpha)
    return ConfidenceInterval(draw_value, draw_value - h, draw_value + h, alpha, "laplace-asymptotic")


def ratio_estimate(samples: Sequence[float]) -> float:
    """1 / sample mean; ``nan`` when the sample mean is zero."""
    z = np.asarray(samples, dtype=np.float64)
    if z.size == 0:
        raise ValueError("ratio_estimate needs at least one sample")
    mean = float(np.mean(z))
    if mean <= 0.0:
        return math.nan
    return 1.0 / mean


def ratio_ci(samples: Sequence[float], alpha: float = 0.05) -> ConfidenceInterval:
    """Delta-method normal interval 1/Zbar +- z_{alpha/2} s / (sqrt(n) Zbar^2)."""
    z = np.asarray(samples, dtype=np.float64)
    if z.size < 2:
        raise ValueError("ratio_ci needs at least two samples")
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")
    center = ratio_estimate(z)
    if math.isnan(center):
        raise ValueError("sample mean is zero; ratio estimate undefined")
    mean = float(np.mean(z))
    scale = float(np.std(z, ddof=1)) / (math.sqrt(z.size) * mean * mean)
    h = stats.norm.ppf(1.0 - alpha / 2.0) * scale
    return ConfidenceInterval(center, center - h, center + h, alpha, "normal-delta")


def standardized_errors(draws: Iterable[EstimateDraw] | np.ndarray, w: float, m: MomentSummary) -> np.ndarray:
    """(value - beta) / (sigma sqrt(w E Z)); tends to the unit-variance Laplace law."""
    if isinstance(draws, np.ndarray):
        values = draws.astype(np.float64)
    else:
        draws = list(draws)
        if any(d.w != w for d in draws):
            raise ValueError("all draws must share the same w")
        values = np.array([d.value for d in draws], dtype=np.float64)
    return (values - m.beta) / (m.sigma * math.sqrt(w * m.z1))


def ks_statistic(samples: Sequence[float], cdf: Callable) -> float:
    """Two-sided sup distance between the empirical CDF and ``cdf``."""
    x = np.asarray(samples, dtype=np.float64)
    if x.size == 0:
        raise ValueError("ks_statistic needs a non-empty sample")
    return float(stats.kstest(x, cdf).statistic)


def normal_cdf(x):
    return stats.norm.cdf(x)


def sample_excess_kurtosis(x: np.ndarray) -> float:
    return float(stats.kurtosis(x, fisher=True, bias=True))


__all__ = [
    "ConfidenceInterval",
    "laplace_cdf",
    "laplace_ci",
    "laplace_half_width",
    "ks_statistic",
    "normal_cdf",
    "ratio_ci",
    "ratio_estimate",
    "sample_excess_kurtosis",
    "standardized_errors",
]
