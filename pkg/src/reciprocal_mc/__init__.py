"""Unbiased estimation of 1/E Z by randomly truncated product series."""

from importlib.metadata import PackageNotFoundError, version

try:
    __version__ = version("artifact")
except PackageNotFoundError:  # running from a source tree
    __version__ = "0.1.0"

from .exactcalc import success_probability, tuning_point
from .estimator import TruncationLaw, replicate, single_draw
from .zmodels import Bernoulli, DiscreteFinite, MomentSummary, ScaledUniform, parse_model_spec

__all__ = [
    "Bernoulli",
    "DiscreteFinite",
    "MomentSummary",
    "ScaledUniform",
    "TruncationLaw",
    "parse_model_spec",
    "replicate",
    "single_draw",
    "success_probability",
    "tuning_point",
]
