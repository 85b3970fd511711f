"""Invariant suites run by ``reciprocal-mc validate``.

Every check is deterministic: random (model, w) pairs come from a seeded
numpy generator, so a suite either always passes or always fails.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import integrate

from .estimator import TruncationLaw
from .exactcalc import (
    _DefiningSum,
    d_w_upper_bound,
    laplace_cdf,
    laplace_pdf,
    laplace_quantile,
    solve_time_variance_weight,
    success_probability,
    tuning_point,
    tvm_series,
)
from .oracle import bernoulli_exact_distribution, exact_second_moment_series
from .zmodels import Bernoulli, DiscreteFinite, MomentSummary, ScaledUniform, ZModel


@dataclass(frozen=True)
class Check:
    suite: str
    name: str
    passed: bool
    detail: str = ""


def random_model(rng: np.random.Generator) -> ZModel:
    kind = rng.integers(3)
    if kind == 0:
        return Bernoulli(float(10 ** rng.uniform(-4, math.log10(0.999))))
    if kind == 1:
        return ScaledUniform(float(10 ** rng.uniform(-2, 2)))
    size = int(rng.integers(2, 6))
    while True:
        values = rng.uniform(0, 10, size)
        values[0] = 0.0 if rng.random() < 0.5 else values[0]
        probs = rng.dirichlet(np.ones(size))
        probs[-1] = 1.0 - math.fsum(probs[:-1])
        if np.all(probs > 0) and np.ptp(values) > 1e-3:
            return DiscreteFinite(tuple(values.tolist()), tuple(probs.tolist()))


def random_pairs(count: int, seed: int) -> list[tuple[ZModel, float]]:
    rng = np.random.default_rng(seed)
    pairs = []
    for _ in range(count):
        model = random_model(rng)
        m = model.moments()
        pairs.append((model, float(rng.uniform(0.001, 0.999) * m.w_max)))
    return pairs


def _fmt_violations(bad: list) -> str:
    return f"{len(bad)} violations" + (f", first {bad[0]}" if bad else "")


def shape_suite(pairs: int = 500, grid_points: int = 201, seed: int = 7) -> list[Check]:
    """p_w sandwich, concavity of p_w, convex increasing variance, increasing TVP."""
    checks = []
    bad = []
    for model, w in random_pairs(pairs, seed):
        m = model.moments()
        p = success_probability(w, m)
        if not (m.z1 - w * m.z2 / 2 <= p / w < m.z1):
            bad.append((model.spec(), w))
    checks.append(Check("shape", f"p_w sandwich on {pairs} random pairs", not bad, _fmt_violations(bad)))

    models = [Bernoulli(0.001), Bernoulli(0.3), ScaledUniform(2.0), DiscreteFinite((0.0, 2.0, 5.0), (0.5, 0.3, 0.2))]
    for model in models:
        m = model.moments()
        grid = np.linspace(0.01, 0.99, grid_points) * m.w_max
        pts = [tuning_point(w, m) for w in grid]
        p = np.array([t.p_w for t in pts])
        var = np.array([t.variance for t in pts])
        tvp = np.array([t.tvp for t in pts])
        h = grid[1] - grid[0]
        tag = model.spec()
        conc = np.diff(p, 2)
        checks.append(Check("shape", f"{tag}: p_w concave", bool(np.all(conc <= 0)),
                            _fmt_violations(np.flatnonzero(conc > 0).tolist())))
        w_star = m.z1 / m.z2
        checks.append(Check("shape", f"{tag}: p_w max at z1/z2", bool(abs(grid[np.argmax(p)] - w_star) <= h),
                            f"argmax {float(grid[np.argmax(p)])!r} vs {w_star!r}"))
        checks.append(Check("shape", f"{tag}: variance increasing", bool(np.all(np.diff(var) > 0))))
        checks.append(Check("shape", f"{tag}: variance convex", bool(np.all(np.diff(var, 2) > 0))))
        checks.append(Check("shape", f"{tag}: TVP increasing", bool(np.all(np.diff(tvp) > 0))))
        # The O(w) correction scales with w z2 / z1, so step well inside the interval.
        w_small = 1e-4 * m.z1 / m.z2
        ratio = tuning_point(w_small, m).tvp / m.sigma**2
        checks.append(Check("shape", f"{tag}: TVP at w = 1e-4 z1/z2 within 1% of sigma^2",
                            abs(ratio - 1) < 0.01, f"ratio {ratio!r}"))
    return checks


def laplace_suite() -> list[Check]:
    mass, _ = integrate.quad(laplace_pdf, -np.inf, np.inf, epsabs=1e-13)
    second, _ = integrate.quad(lambda x: x * x * laplace_pdf(x), -np.inf, np.inf, epsabs=1e-13)
    checks = [
        Check("laplace", "density integrates to 1", abs(mass - 1) < 1e-10, f"{mass!r}"),
        Check("laplace", "unit variance", abs(second - 1) < 1e-8, f"{second!r}"),
        Check("laplace", "F(0) = 1/2", laplace_cdf(0.0) == 0.5),
    ]
    xs = np.linspace(-8, 8, 161)
    sym = float(np.max(np.abs(laplace_cdf(-xs) - (1 - laplace_cdf(xs)))))
    checks.append(Check("laplace", "F(-x) = 1 - F(x)", sym < 1e-15, f"max dev {sym!r}"))
    worst = 0.0
    for alpha in (0.001, 0.01, 0.05, 0.1, 0.5, 0.9):
        t = laplace_quantile(alpha)
        worst = max(worst, abs(laplace_cdf(t) - laplace_cdf(-t) - (1 - alpha)))
    checks.append(Check("laplace", "quantile gives mass 1 - alpha", worst < 1e-12, f"max dev {worst!r}"))
    return checks


def tvm_suite(tol: float = 1e-12) -> list[Check]:
    checks = []
    cases = [(Bernoulli(0.5), f) for f in (1.0, 0.1, 0.05, 0.025, 0.01, 0.002)]
    cases += [(Bernoulli(0.1), 0.05), (ScaledUniform(2.0), 0.3), (DiscreteFinite((0.0, 2.0), (0.5, 0.5)), 0.1)]
    for model, frac in cases:
        m = model.moments()
        w = frac * m.z1 / m.z2
        law = solve_time_variance_weight(w, m, tol)
        tag = f"{model.spec()} w={w:.4g}"
        s = _DefiningSum(w, law.p_w, law.beta, tol)
        mono = s(law.d_w / 2) > 1.0 > s(2 * law.d_w)
        checks.append(Check("tvm", f"{tag}: residual < tol and monotone", abs(law.residual) < tol and mono,
                            f"residual {law.residual!r}"))
        bound = d_w_upper_bound(w, law.p_w, m)
        checks.append(Check("tvm", f"{tag}: 1 + d_w z1^2 bound", 1 + law.d_w * m.z1**2 <= bound * (1 + 1e-12),
                            f"{1 + law.d_w * m.z1**2!r} vs {bound!r}"))
        series = tvm_series(law, m)
        geo = tuning_point(w, m).tvp
        lower = geo / math.sqrt(1 + 2 * law.d_w * m.z1**2 / law.p_w)
        checks.append(Check("tvm", f"{tag}: TVP sandwich", bool(lower <= series.tvp <= geo),
                            f"{lower!r} <= {series.tvp!r} <= {geo!r}"))
    return checks


def oracle_suite() -> list[Check]:
    checks = []
    for model in (Bernoulli(0.3), Bernoulli(0.05), ScaledUniform(2.0)):
        m = model.moments()
        w = m.z1 / m.z2
        p = success_probability(w, m)
        series = exact_second_moment_series(w, TruncationLaw.geometric(p), m, tol=1e-10)
        closed = w * w / (p * p)
        rel = abs(series - closed) / closed
        checks.append(Check("oracle", f"{model.spec()}: series vs closed form", rel < 1e-8, f"rel {rel!r}"))
        other = exact_second_moment_series(w, TruncationLaw.geometric(0.5 * p), m, tol=1e-10)
        checks.append(Check("oracle", f"{model.spec()}: geometric(p_w) minimal", other > closed))
    dist = bernoulli_exact_distribution(0.5, 0.5, TruncationLaw.geometric(success_probability(0.5, Bernoulli(0.5).moments())), 1e-13)
    gap = 2.0 - dist.mean()
    checks.append(Check("oracle", "bernoulli(0.5) enumeration mean", -1e-12 <= gap <= dist.mean_tail_bound + 1e-12,
                        f"gap {gap!r}, bound {dist.mean_tail_bound!r}"))
    return checks


SUITES: dict[str, Callable[[], list[Check]]] = {
    "shape": shape_suite,
    "laplace": laplace_suite,
    "tvm": tvm_suite,
    "oracle": oracle_suite,
}


def run_suite(name: str, seed: int = 7) -> list[Check]:
    """Run one suite, or all of them; ``seed`` drives the random-pair sweep."""
    names = list(SUITES) if name == "all" else [name]
    for n in names:
        if n not in SUITES:
            raise KeyError(f"unknown suite {n!r}; choose from {', '.join(['all', *SUITES])}")
    return [c for n in names for c in (shape_suite(seed=seed) if n == "shape" else SUITES[n]())]
