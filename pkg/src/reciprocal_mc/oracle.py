"""Independent ground truth: moment series and exact Bernoulli enumeration.

These routines sum the defining series term by term from the truncation
law's own pmf; they never call the closed forms in :mod:`exactcalc`, so the
two can be checked against each other.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import stats

from .estimator import TruncationLaw
from .exactcalc import _sum_n_r_pow_n_from
from .zmodels import MomentSummary

MAX_TERMS = 50_000_000
MAX_ENUMERATION_N = 20_000


class SeriesDivergenceError(ArithmeticError):
    """The second-moment series of the estimator diverges for this law."""


def _terms_needed(r: float, scale: float, tol: float) -> int:
    """Smallest c with scale * r^(c+1) / (1 - r) < tol."""
    c = math.ceil(math.log(tol * (1.0 - r) / scale) / math.log(r))
    return max(c, 0)


def exact_second_moment_series(w: float, law: TruncationLaw, m: MomentSummary, tol: float = 1e-10) -> float:
    """E[beta^(w)^2] = w^2 sum_n (E(1 - w Z)^2)^n / q_n, to absolute accuracy ``tol``."""
    if not tol > 0:
        raise ValueError("tol must be positive")
    a = 1.0 - 2.0 * w * m.z1 + w * w * m.z2  # E(1 - wZ)^2
    if law.kind == "tvm":
        t = law.tvm
        r = a / (1.0 - t.p_w)
        if r >= 1.0:
            raise SeriesDivergenceError(f"ratio {r!r} >= 1")
        # a^n / q~_n <= r^n sqrt(beta^2 + d s) n / s / w for n >= s
        c = max(t.truncation_n, 16)
        while w * math.sqrt(t.beta**2 + t.d_w * (c + 1)) / (c + 1) * _sum_n_r_pow_n_from(r, c + 1) >= tol:
            c *= 2
            if c > MAX_TERMS:
                raise SeriesDivergenceError(f"no certified truncation within {MAX_TERMS} terms")
    else:
        if law.p >= 1.0:
            return w * w
        r = a / (1.0 - law.p)
        if r >= 1.0:
            raise SeriesDivergenceError(
                f"E(1 - wZ)^2 / (1 - p) = {r!r} >= 1: variance is infinite for geometric({law.p!r})"
            )
        c = _terms_needed(r, w * w / law.p, tol)
        if c > MAX_TERMS:
            raise SeriesDivergenceError(f"series needs {c} terms (> {MAX_TERMS})")
    n = np.arange(c + 1, dtype=np.float64)
    log_terms = 2.0 * math.log(w) + n * math.log(a) - law.log_pmf(n)
    return float(np.sum(np.exp(log_terms)))


@dataclass(frozen=True)
class BernoulliDistribution:
    """Atoms of beta^(w) for Z ~ Bernoulli(s) with N ~ geometric(p), n <= n_max.

    ``mean_tail_bound`` and ``second_moment_tail_bound`` bound the omitted
    contributions of n > n_max to E beta^ and E beta^2.
    """

    values: np.ndarray
    probs: np.ndarray
    n_max: int
    mean_tail_bound: float
    second_moment_tail_bound: float

    @property
    def covered_mass(self) -> float:
        return float(np.sum(self.probs))

    def mean(self) -> float:
        return float(np.sum(self.values * self.probs))

    def second_moment(self) -> float:
        return float(np.sum(self.values**2 * self.probs))

    def atoms(self) -> list[tuple[float, float]]:
        return list(zip(self.values.tolist(), self.probs.tolist()))


def bernoulli_exact_distribution(w: float, p_success: float, law: TruncationLaw, cutoff_mass: float) -> BernoulliDistribution:
    """Enumerate beta^(w) outcomes: given N = n the product is (1 - w)^K, K ~ Bin(n, s)."""
    if law.kind == "tvm":
        raise ValueError("enumeration supports geometric laws only")
    if not 0.0 < cutoff_mass < 1.0:
        raise ValueError(f"cutoff_mass must lie in (0, 1), got {cutoff_mass}")
    s, p = p_success, law.p
    if p >= 1.0:
        n_max = 0
    else:
        n_max = max(0, math.ceil(math.log(cutoff_mass) / math.log1p(-p)) - 1)
    if n_max > MAX_ENUMERATION_N:
        raise ArithmeticError(f"cutoff mass {cutoff_mass} needs n up to {n_max} (> {MAX_ENUMERATION_N})")

    values, probs = [], []
    for n in range(n_max + 1):
        k = np.arange(n + 1)
        q_n = p * (1.0 - p) ** n
        values.append(w / q_n * (1.0 - w) ** k)
        probs.append(q_n * stats.binom.pmf(k, n, s))
    values = np.concatenate(values)
    probs = np.concatenate(probs)

    start = n_max + 1
    c_abs = (1.0 - s) + s * abs(1.0 - w)  # E|1 - wZ|
    mean_tail = w * c_abs**start / (1.0 - c_abs) if c_abs < 1.0 else math.inf
    a = 1.0 - 2.0 * w * s + w * w * s
    r = a / (1.0 - p) if p < 1.0 else 0.0
    m2_tail = (w * w / p) * r**start / (1.0 - r) if r < 1.0 else math.inf
    return BernoulliDistribution(values, probs, n_max, mean_tail, m2_tail)
