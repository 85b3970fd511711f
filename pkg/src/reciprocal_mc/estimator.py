"""Draws of the randomized-truncation estimator of beta = 1 / E Z.

One draw is ``w / q_N * prod_{i<=N} (1 - w Z_i)`` with ``N`` from a
truncation law ``q``. The product is accumulated in log-magnitude form
together with an explicit sign, and the ``(1 - p)^N`` factor of ``q_N`` is
cancelled term by term, so values stay finite for N in the millions.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .exactcalc import TvmLaw, _sum_n_r_pow_n_from, check_feasible
from .zmodels import RandomStream, ZModel

# Z draws per chunk when accumulating very long products.
_CHUNK = 1 << 20


@dataclass(frozen=True)
class TruncationLaw:
    """Law of the truncation index N on {0, 1, 2, ...}.

    ``kind`` is ``"geometric"``, ``"empirical-geometric"`` or ``"tvm"``.
    The two geometric kinds share the pmf ``p (1-p)^n``; the second only
    records that ``p`` came from pilot data.
    """

    kind: str
    p: float
    tvm: Optional[TvmLaw] = None

    def __post_init__(self):
        if self.kind not in ("geometric", "empirical-geometric", "tvm"):
            raise ValueError(f"unknown truncation law {self.kind!r}")
        if self.kind == "tvm":
            if self.tvm is None:
                raise ValueError("tvm law requires a TvmLaw")
        elif not 0.0 < self.p <= 1.0:
            raise ValueError(f"geometric success probability must lie in (0, 1], got {self.p}")

    @classmethod
    def geometric(cls, p: float) -> "TruncationLaw":
        return cls("geometric", float(p))

    @classmethod
    def empirical_geometric(cls, p: float) -> "TruncationLaw":
        return cls("empirical-geometric", float(p))

    @classmethod
    def time_variance_minimizing(cls, law: TvmLaw) -> "TruncationLaw":
        return cls("tvm", law.p_w, law)

    def log_pmf(self, n):
        if self.kind == "tvm":
            return self.tvm.log_pmf(n)
        n = np.asarray(n, dtype=np.float64)
        out = math.log(self.p) + n * math.log1p(-self.p) if self.p < 1.0 else np.where(n == 0, 0.0, -np.inf)
        return out if np.ndim(out) else float(out)

    def pmf(self, n):
        return np.exp(self.log_pmf(n))

    def mean(self) -> float:
        if self.kind == "tvm":
            return _tvm_mean(self.tvm)
        return (1.0 - self.p) / self.p

    def describe(self) -> str:
        if self.kind == "tvm":
            return f"tvm(w={self.tvm.w!r}, d_w={self.tvm.d_w!r})"
        return f"{self.kind}({self.p!r})"


def _tvm_mean(law: TvmLaw) -> float:
    r = 1.0 - law.p_w
    n_cut = max(law.truncation_n, 16)
    while (law.w / law.beta) * _sum_n_r_pow_n_from(r, n_cut + 1) > 1e-12:
        n_cut *= 2
    n = np.arange(n_cut + 1, dtype=np.float64)
    return float(np.sum(n * law.pmf(n)))


@dataclass(frozen=True)
class EstimateDraw:
    value: float
    n_used: int
    z_draws: int
    w: float


def _draw_geometric(p: float, stream: RandomStream) -> int:
    # Inverse transform: N = floor(log U / log(1-p)), U in (0, 1].
    if p >= 1.0:
        stream.random()
        return 0
    return int(math.floor(math.log(stream.open_uniform()) / math.log1p(-p)))


def draw_truncation(law: TruncationLaw, stream: RandomStream) -> int:
    """Sample N from ``law``.

    The TVM law is sampled by rejection from geometric(p_w) with acceptance
    probability beta / sqrt(beta^2 + d_w n) <= 1.
    """
    if law.kind != "tvm":
        return _draw_geometric(law.p, stream)
    t = law.tvm
    beta2 = t.beta * t.beta
    while True:
        n = _draw_geometric(t.p_w, stream)
        if stream.random() * math.sqrt(beta2 + t.d_w * n) < t.beta:
            return n


def _log_abs_product(w: float, model: ZModel, stream: RandomStream, n: int) -> tuple[float, int]:
    """(sum log|1 - w Z_i|, sign) over n fresh Z draws; sign 0 if a factor vanished."""
    total = 0.0
    negatives = 0
    zero = False
    remaining = n
    while remaining > 0:
        size = min(remaining, _CHUNK)
        remaining -= size
        wz = w * model.sample(stream, size)
        if zero:
            continue
        if np.any(wz == 1.0):
            zero = True
            continue
        neg = wz > 1.0
        if neg.any():
            negatives += int(np.count_nonzero(neg))
            logs = np.log1p(-np.where(neg, 0.0, wz))
            logs[neg] = np.log(wz[neg] - 1.0)
            total += float(np.sum(logs))
        else:
            total += float(np.sum(np.log1p(-wz)))
    if zero:
        return -math.inf, 0
    return total, -1 if negatives % 2 else 1


def _value_from_log(w: float, law: TruncationLaw, n: int, log_prod: float, sign: int) -> float:
    if sign == 0:
        return 0.0
    if law.kind == "tvm":
        t = law.tvm
        # w / q~_n = sqrt(beta^2 + d n) / (1-p)^n
        log_val = 0.5 * math.log(t.beta**2 + t.d_w * n) + log_prod - n * math.log1p(-t.p_w)
    elif law.p >= 1.0:
        log_val = math.log(w) + log_prod
    else:
        log_val = math.log(w / law.p) + log_prod - n * math.log1p(-law.p)
    return sign * math.exp(log_val)


def estimate_from(w: float, law: TruncationLaw, model: ZModel, stream: RandomStream) -> EstimateDraw:
    """One draw without the feasibility check (for pilot-driven w)."""
    n = draw_truncation(law, stream)
    log_prod, sign = _log_abs_product(w, model, stream, n)
    return EstimateDraw(_value_from_log(w, law, n, log_prod, sign), n, n, w)


def single_draw(w: float, law: TruncationLaw, model: ZModel, stream: RandomStream) -> EstimateDraw:
    check_feasible(w, model.moments())
    return estimate_from(w, law, model, stream)


@dataclass
class ReplicationSummary:
    reps: int
    mean: float
    sample_variance: float  # nan when reps == 1
    total_cost: int
    standard_error: float
    values: Optional[np.ndarray] = None
    n_used: Optional[np.ndarray] = None

    @property
    def variance_defined(self) -> bool:
        return self.reps > 1

    @property
    def mean_cost(self) -> float:
        return self.total_cost / self.reps

    @classmethod
    def from_arrays(cls, values: np.ndarray, n_used: np.ndarray, keep: bool = True) -> "ReplicationSummary":
        reps = len(values)
        mean = float(np.mean(values))
        var = float(np.var(values, ddof=1)) if reps > 1 else math.nan
        se = math.sqrt(var / reps) if reps > 1 else math.nan
        return cls(
            reps=reps,
            mean=mean,
            sample_variance=var,
            total_cost=int(np.sum(n_used, dtype=np.int64)),
            standard_error=se,
            values=values if keep else None,
            n_used=n_used if keep else None,
        )


def _replicate_range(w, law, model, seed, start, stop):
    values = np.empty(stop - start)
    n_used = np.empty(stop - start, dtype=np.int64)
    for j, i in enumerate(range(start, stop)):
        d = estimate_from(w, law, model, RandomStream(seed, i))
        values[j] = d.value
        n_used[j] = d.n_used
    return values, n_used


def index_chunks(reps: int, workers: int) -> list[tuple[int, int]]:
    """Contiguous index ranges, several per worker for load balance."""
    pieces = max(1, min(reps, workers * 8))
    edges = np.linspace(0, reps, pieces + 1).astype(int)
    return [(int(a), int(b)) for a, b in zip(edges[:-1], edges[1:]) if b > a]


def run_indexed(fn, args: tuple, reps: int, workers: int = 1):
    """Evaluate ``fn(*args, start, stop)`` over [0, reps) and concatenate in index order.

    ``fn`` returns a tuple of arrays. Output is identical for every ``workers``.
    """
    if workers <= 1:
        parts = [fn(*args, 0, reps)]
    else:
        chunks = index_chunks(reps, workers)
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(fn, *args, a, b) for a, b in chunks]
            parts = [f.result() for f in futures]
    return tuple(np.concatenate(cols) for cols in zip(*parts))


def replicate(
    w: float,
    law: TruncationLaw,
    model: ZModel,
    reps: int,
    seed: int,
    workers: int = 1,
    keep_draws: bool = True,
) -> ReplicationSummary:
    """``reps`` independent draws on streams (seed, 0), ..., (seed, reps-1)."""
    if reps < 1:
        raise ValueError("reps must be >= 1")
    check_feasible(w, model.moments())
    workers = workers or os.cpu_count() or 1
    values, n_used = run_indexed(_replicate_range, (w, law, model, seed), reps, workers)
    return ReplicationSummary.from_arrays(values, n_used, keep=keep_draws)
