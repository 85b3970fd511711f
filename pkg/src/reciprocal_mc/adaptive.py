"""Two-phase implementation: pilot moments choose (w_k, P_k), then one draw.

The pilot spends ``k`` draws of Z on the first two sample moments. From them

    w_k = min(1 / (k M1), M1 / M2, epsilon),  P_k = 1 - sqrt(mean (1 - w_k Z~)^2)

and the estimator is drawn with the geometric(P_k) truncation law on an
independent stream. If every pilot draw is zero, P_k = 1/k and
w_k = epsilon / k instead.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from .estimator import EstimateDraw, TruncationLaw, estimate_from, run_indexed
from .zmodels import MomentSummary, RandomStream, ZModel

PILOT_LANE = 0
DRAW_LANE = 1


@dataclass(frozen=True)
class PilotResult:
    k: int
    m1: float
    m2: float
    w_k: float
    p_k: float
    epsilon: float
    degenerate: bool

    def law(self) -> TruncationLaw:
        return TruncationLaw.empirical_geometric(self.p_k)

    def with_w(self, w: float) -> "PilotResult":
        """Same pilot moments, different w; P_k is recomputed from the moments."""
        if self.degenerate:
            return replace(self, w_k=w)
        p = _p_from_moments(w, self.m1, self.m2)
        if not 0.0 < p < 1.0:
            raise ValueError(f"w = {w!r} gives P_k = {p!r}; need w < 2 M1/M2")
        return replace(self, w_k=w, p_k=p)


def _p_from_moments(w: float, m1: float, m2: float) -> float:
    eps = 2.0 * w * m1 - w * w * m2
    return eps / (1.0 + math.sqrt(1.0 - eps))


def pilot_from_sample(z: np.ndarray, epsilon: float) -> PilotResult:
    k = len(z)
    if k < 2:
        # k = 1 can give P_k = 1, which puts no mass on N >= 1.
        raise ValueError(f"pilot size must be >= 2, got {k}")
    if not epsilon > 0:
        raise ValueError(f"epsilon must be positive, got {epsilon}")
    z = np.asarray(z, dtype=np.float64)
    m1 = float(np.mean(z))
    m2 = float(np.mean(z * z))
    if m1 == 0.0:
        return PilotResult(k, 0.0, 0.0, epsilon / k, 1.0 / k, epsilon, True)
    w = min(1.0 / (k * m1), m1 / m2, epsilon)
    return PilotResult(k, m1, m2, w, _p_from_moments(w, m1, m2), epsilon, False)


def pilot(k: int, model: ZModel, epsilon: float, stream: RandomStream) -> PilotResult:
    """Spend exactly ``k`` Z-draws from ``stream`` on the pilot moments."""
    if not epsilon > 0:
        raise ValueError(f"epsilon must be positive, got {epsilon}")
    if k < 2:
        raise ValueError(f"pilot size must be >= 2, got {k}")
    return pilot_from_sample(model.sample(stream, k), epsilon)


def adaptive_draw(
    pr: PilotResult,
    model: ZModel,
    stream: RandomStream,
    w_override: Optional[float] = None,
) -> EstimateDraw:
    """One unbiased draw at w_k with the geometric(P_k) law.

    ``stream`` must be independent of the pilot stream.
    """
    if w_override is not None:
        pr = pr.with_w(w_override)
    return estimate_from(pr.w_k, pr.law(), model, stream)


def conditional_variance(pr: PilotResult, m: MomentSummary) -> float:
    """Var(beta^(w_k) | pilot), or ``math.inf`` when the series diverges.

    The series converges iff delta_k = 1 - E(1 - w_k Z)^2 / (1 - P_k) > 0.
    """
    w, p = pr.w_k, pr.p_k
    # 1 - P - E(1 - wZ)^2 written without the leading 1 - 1.
    delta = (2.0 * w * m.z1 - w * w * m.z2 - p) / (1.0 - p)
    if not delta > 0:
        return math.inf
    return w * w / (p * delta) - m.beta**2


def conditional_tvp(pr: PilotResult, m: MomentSummary) -> float:
    """(k + 1/P_k) * Var(beta^(w_k) | pilot); ``math.inf`` flags a divergent variance."""
    var = conditional_variance(pr, m)
    if math.isinf(var):
        return math.inf
    return (pr.k + 1.0 / pr.p_k) * var


@dataclass
class AdaptiveRun:
    """Per-replication arrays of an adaptive experiment, in index order."""

    values: np.ndarray
    n_used: np.ndarray
    p_k: np.ndarray
    w_k: np.ndarray
    m1: np.ndarray
    m2: np.ndarray
    degenerate: np.ndarray
    k: int
    epsilon: float

    @property
    def reps(self) -> int:
        return len(self.values)

    def pilot(self, i: int) -> PilotResult:
        return PilotResult(
            self.k, float(self.m1[i]), float(self.m2[i]), float(self.w_k[i]),
            float(self.p_k[i]), self.epsilon, bool(self.degenerate[i]),
        )


def _adaptive_range(model, k, epsilon, seed, start, stop):
    size = stop - start
    cols = {name: np.empty(size) for name in ("values", "p_k", "w_k", "m1", "m2")}
    n_used = np.empty(size, dtype=np.int64)
    degenerate = np.empty(size, dtype=bool)
    for j, i in enumerate(range(start, stop)):
        stream = RandomStream(seed, i)
        pr = pilot(k, model, epsilon, stream.child(PILOT_LANE))
        d = adaptive_draw(pr, model, stream.child(DRAW_LANE))
        cols["values"][j] = d.value
        n_used[j] = d.n_used
        cols["p_k"][j] = pr.p_k
        cols["w_k"][j] = pr.w_k
        cols["m1"][j] = pr.m1
        cols["m2"][j] = pr.m2
        degenerate[j] = pr.degenerate
    return cols["values"], n_used, cols["p_k"], cols["w_k"], cols["m1"], cols["m2"], degenerate


def run_adaptive(model: ZModel, k: int, epsilon: float, reps: int, seed: int, workers: int = 1) -> AdaptiveRun:
    """``reps`` independent (pilot, draw) pairs; replication i uses stream (seed, i)."""
    if reps < 1:
        raise ValueError("reps must be >= 1")
    if k < 2:
        raise ValueError(f"pilot size must be >= 2, got {k}")
    values, n_used, p_k, w_k, m1, m2, degenerate = run_indexed(
        _adaptive_range, (model, k, epsilon, seed), reps, workers
    )
    return AdaptiveRun(values, n_used, p_k, w_k, m1, m2, degenerate, k, epsilon)


def pilot_only(model: ZModel, k: int, epsilon: float, reps: int, seed: int) -> list[PilotResult]:
    """Pilots alone, on the same streams ``run_adaptive`` would use."""
    return [pilot(k, model, epsilon, RandomStream(seed, i).child(PILOT_LANE)) for i in range(reps)]
