"""Bounded non-negative random variables Z and the seeded stream contract.

Every sampling routine in the package draws from a :class:`RandomStream`.
A stream is identified by ``(seed, stream_index)`` plus an optional lane
path; the identifier is mixed into numpy's ``SeedSequence`` as a spawn key,
so distinct identifiers give statistically independent PCG64 streams and
equal identifiers reproduce the same doubles bit for bit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

GENERATOR_NAME = "numpy.random.PCG64 seeded by SeedSequence(seed, spawn_key=(stream_index, *lane))"
GENERATOR_VERSION = np.__version__

_MAX_SEED = 2**64 - 1


class DegenerateModelError(ValueError):
    """Raised when a model has zero variance."""


def generator_metadata() -> dict:
    return {"generator": GENERATOR_NAME, "numpy_version": GENERATOR_VERSION}


class RandomStream:
    """Single-owner random stream for one replication.

    Args:
        seed: 64-bit non-negative master seed.
        stream_index: replication index; each index is an independent stream.
        lane: extra spawn-key components, used to split one replication into
            independent sub-streams (e.g. pilot and estimator phases).
    """

    def __init__(self, seed: int, stream_index: int = 0, lane: Sequence[int] = ()):
        if not 0 <= seed <= _MAX_SEED:
            raise ValueError(f"seed must be in [0, 2**64), got {seed}")
        if stream_index < 0:
            raise ValueError(f"stream_index must be non-negative, got {stream_index}")
        self.seed = int(seed)
        self.stream_index = int(stream_index)
        self.lane = tuple(int(x) for x in lane)
        seq = np.random.SeedSequence(self.seed, spawn_key=(self.stream_index, *self.lane))
        self._gen = np.random.Generator(np.random.PCG64(seq))

    def child(self, lane: int) -> "RandomStream":
        """Independent sub-stream of this stream (state of ``self`` is untouched)."""
        return RandomStream(self.seed, self.stream_index, (*self.lane, lane))

    def random(self, size=None):
        """Uniform doubles in [0, 1)."""
        return self._gen.random(size)

    def open_uniform(self) -> float:
        """One uniform double in (0, 1]."""
        return 1.0 - self._gen.random()

    def __repr__(self):
        return f"RandomStream(seed={self.seed}, stream_index={self.stream_index}, lane={self.lane})"


@dataclass(frozen=True)
class MomentSummary:
    """First two moments of Z and the quantities derived from them."""

    z1: float
    z2: float

    def __post_init__(self):
        if not (self.z1 > 0 and math.isfinite(self.z1) and math.isfinite(self.z2)):
            raise DegenerateModelError(f"E Z must be positive and finite, got {self.z1}")
        if not self.z2 > self.z1 * self.z1:
            raise DegenerateModelError(
                f"Z is degenerate: E Z^2 = {self.z2!r} <= (E Z)^2 = {self.z1 * self.z1!r}"
            )

    @property
    def var(self) -> float:
        return self.z2 - self.z1 * self.z1

    @property
    def rel_var(self) -> float:
        return self.var / (self.z1 * self.z1)

    @property
    def sigma(self) -> float:
        """sqrt(Var Z / (E Z)^4), the asymptotic scale of both estimators."""
        return math.sqrt(self.var) / (self.z1 * self.z1)

    @property
    def beta(self) -> float:
        return 1.0 / self.z1

    @property
    def w_max(self) -> float:
        """Right end of the feasibility interval (0, 2 z1/z2)."""
        return 2.0 * self.z1 / self.z2


class ZModel:
    """Base class for bounded non-negative models of Z."""

    bound: float

    def moments(self) -> MomentSummary:
        raise NotImplementedError

    def sample(self, stream: RandomStream, size: int | None = None):
        raise NotImplementedError

    def spec(self) -> str:
        """Canonical CLI spec string."""
        raise NotImplementedError


@dataclass(frozen=True)
class Bernoulli(ZModel):
    p: float

    def __post_init__(self):
        if not 0.0 < self.p < 1.0:
            raise ValueError(f"bernoulli p must lie in (0, 1), got {self.p}")

    @property
    def bound(self) -> float:
        return 1.0

    def moments(self) -> MomentSummary:
        return MomentSummary(self.p, self.p)

    def sample(self, stream, size=None):
        u = stream.random(size)
        if size is None:
            return 1.0 if u < self.p else 0.0
        return (u < self.p).astype(np.float64)

    def spec(self):
        return f"bernoulli:{self.p!r}"


@dataclass(frozen=True)
class ScaledUniform(ZModel):
    """Z = b * U with U uniform on (0, 1)."""

    b: float

    def __post_init__(self):
        if not (self.b > 0 and math.isfinite(self.b)):
            raise ValueError(f"uniform scale b must be positive and finite, got {self.b}")

    @property
    def bound(self) -> float:
        return self.b

    def moments(self) -> MomentSummary:
        return MomentSummary(self.b / 2.0, self.b * self.b / 3.0)

    def sample(self, stream, size=None):
        return self.b * stream.random(size)

    def spec(self):
        return f"uniform:{self.b!r}"


@dataclass(frozen=True)
class DiscreteFinite(ZModel):
    values: tuple[float, ...]
    probs: tuple[float, ...]
    _cdf: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        values = tuple(float(v) for v in self.values)
        probs = tuple(float(p) for p in self.probs)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "probs", probs)
        if len(values) == 0 or len(values) != len(probs):
            raise ValueError("discrete model needs equally many values and probabilities")
        if any(not (v >= 0 and math.isfinite(v)) for v in values):
            raise ValueError(f"discrete values must be finite and non-negative, got {values}")
        if any(not p > 0 for p in probs):
            raise ValueError(f"discrete probabilities must be positive, got {probs}")
        total = math.fsum(probs)
        if abs(total - 1.0) > 1e-12:
            raise ValueError(f"discrete probabilities must sum to 1, got {total!r}")
        cdf = np.cumsum(probs)
        cdf[-1] = 1.0
        object.__setattr__(self, "_cdf", cdf)
        self.moments()

    @property
    def bound(self) -> float:
        return max(self.values)

    def moments(self) -> MomentSummary:
        z1 = math.fsum(v * p for v, p in zip(self.values, self.probs))
        z2 = math.fsum(v * v * p for v, p in zip(self.values, self.probs))
        return MomentSummary(z1, z2)

    def sample(self, stream, size=None):
        vals = np.asarray(self.values)
        idx = np.searchsorted(self._cdf, stream.random(size), side="right")
        if size is None:
            return float(vals[idx])
        return vals[idx]

    def spec(self):
        vs = ",".join(repr(v) for v in self.values)
        ps = ",".join(repr(p) for p in self.probs)
        return f"discrete:{vs}@{ps}"


def moments(model: ZModel) -> MomentSummary:
    """Analytic moments of ``model``; raises DegenerateModelError if Var Z = 0."""
    return model.moments()


def sample(model: ZModel, stream: RandomStream, size: int | None = None):
    return model.sample(stream, size)


class ModelSpecError(ValueError):
    """Malformed model spec string; ``position`` is the 0-based character offset."""

    def __init__(self, spec: str, position: int, expected: str):
        self.spec = spec
        self.position = position
        self.expected = expected
        pointer = " " * position + "^"
        super().__init__(f"bad model spec at position {position}: expected {expected}\n  {spec}\n  {pointer}")


def _parse_number(spec: str, start: int, stop: int) -> float:
    text = spec[start:stop]
    try:
        value = float(text)
    except ValueError:
        raise ModelSpecError(spec, start, "a number") from None
    if not math.isfinite(value) or text.strip() != text or text == "":
        raise ModelSpecError(spec, start, "a finite number")
    return value


def _parse_list(spec: str, start: int, stop: int) -> list[float]:
    out = []
    pos = start
    while True:
        comma = spec.find(",", pos, stop)
        end = stop if comma < 0 else comma
        out.append(_parse_number(spec, pos, end))
        if comma < 0:
            return out
        pos = comma + 1


def parse_model_spec(spec: str) -> ZModel:
    """Parse ``bernoulli:P``, ``uniform:B`` or ``discrete:V1,V2@P1,P2``."""
    if not spec:
        raise ModelSpecError(spec, 0, "a model kind")
    colon = spec.find(":")
    if colon < 0:
        raise ModelSpecError(spec, len(spec), "':' after the model kind")
    kind = spec[:colon]
    body_start = colon + 1
    if kind == "bernoulli":
        p = _parse_number(spec, body_start, len(spec))
        if not 0 < p < 1:
            raise ModelSpecError(spec, body_start, "a probability in (0, 1)")
        return Bernoulli(p)
    if kind == "uniform":
        b = _parse_number(spec, body_start, len(spec))
        if not b > 0:
            raise ModelSpecError(spec, body_start, "a positive scale")
        return ScaledUniform(b)
    if kind == "discrete":
        at = spec.find("@", body_start)
        if at < 0:
            raise ModelSpecError(spec, len(spec), "'@' separating values from probabilities")
        values = _parse_list(spec, body_start, at)
        probs = _parse_list(spec, at + 1, len(spec))
        if len(values) != len(probs):
            raise ModelSpecError(spec, at + 1, f"{len(values)} probabilities")
        try:
            return DiscreteFinite(tuple(values), tuple(probs))
        except ValueError as exc:
            raise ModelSpecError(spec, body_start, f"a valid non-degenerate distribution ({exc})") from None
    raise ModelSpecError(spec, 0, "one of 'bernoulli', 'uniform', 'discrete'")
