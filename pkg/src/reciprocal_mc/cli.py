"""Command-line entry point: ``reciprocal-mc <command> [options]``.

Outputs are CSV (with ``#`` metadata lines ahead of the header) or, with
``--json``, one JSON document. Neither ``--workers`` nor ``--out`` enter
the metadata, so reruns with the same seed and parameters are byte-identical.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from dataclasses import asdict
from typing import Sequence

from . import __version__, experiments
from .exactcalc import InfeasibleWError
from .validation import SUITES, run_suite
from .zmodels import DegenerateModelError, ModelSpecError, generator_metadata, parse_model_spec

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_VALIDATION = 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _fmt(x) -> str:
    if hasattr(x, "item"):
        x = x.item()
    if isinstance(x, bool) or x is None:
        return str(x).lower() if isinstance(x, bool) else ""
    if isinstance(x, int):
        return str(x)
    if isinstance(x, float):
        return format(x, ".17g")
    return str(x)


def _jsonable(x):
    if isinstance(x, float) and not math.isfinite(x):
        return str(x)
    if isinstance(x, dict):
        return {k: _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if hasattr(x, "item"):
        return _jsonable(x.item())
    return x


def render(metadata: dict, columns: list[str], rows: list[dict], as_json: bool) -> str:
    if as_json:
        doc = {"metadata": metadata, "rows": [{c: r[c] for c in columns} for r in rows]}
        return json.dumps(_jsonable(doc), indent=2, sort_keys=True) + "\n"
    buf = io.StringIO()
    for key in sorted(metadata):
        buf.write(f"# {key}: {json.dumps(_jsonable(metadata[key]), sort_keys=True)}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for r in rows:
        writer.writerow([_fmt(r[c]) for c in columns])
    return buf.getvalue()


def _model(spec: str):
    try:
        return parse_model_spec(spec)
    except ModelSpecError as exc:
        raise UsageError(str(exc)) from None


def _float_list(text: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _int_list(text: str) -> list[int]:
    try:
        return [int(x) for x in text.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _params(args: argparse.Namespace) -> dict:
    skip = {"func", "out", "json", "workers"}
    return {k: v for k, v in sorted(vars(args).items()) if k not in skip}


def _metadata(args: argparse.Namespace, **extra) -> dict:
    meta = {"command": args.command, "package_version": __version__, **generator_metadata()}
    meta["parameters"] = _params(args)
    meta.update(extra)
    return meta


# --- commands -------------------------------------------------------------------


def cmd_curve(args):
    model = _model(args.model)
    m = model.moments()
    wmin = args.wmin if args.wmin is not None else 0.01 * m.w_max
    wmax = args.wmax if args.wmax is not None else 0.99 * m.w_max
    pts = experiments.curve(model, wmin, wmax, args.points)
    cols = ["w", "p_w", "expected_cost", "variance", "rel_variance", "tvp_rel"]
    meta = _metadata(args, rel_var_z=m.rel_var, sigma=m.sigma)
    return render(meta, cols, [asdict(p) for p in pts], args.json), EXIT_OK


def cmd_estimate(args):
    model = _model(args.model)
    rep = experiments.estimate(model, args.w, args.law, args.reps, args.seed, args.alpha,
                               args.p_scale, workers=args.workers)
    s = rep.summary
    meta = _metadata(
        args,
        law=rep.law,
        beta=rep.beta,
        mean=s.mean,
        sample_variance=s.sample_variance,
        standard_error=s.standard_error,
        total_cost=s.total_cost,
        ci_half_width=rep.half_width,
        ci_coverage=rep.coverage,
    )
    cols = ["index", "value", "n_used", "ci_lower", "ci_upper"]
    return render(meta, cols, list(rep.rows()), args.json), EXIT_OK


def cmd_adaptive(args):
    model = _model(args.model)
    if args.budget is not None:
        args.k = args.budget // 2
    if args.k < 2:
        raise UsageError(f"pilot size k must be >= 2, got {args.k}")
    rep = experiments.adaptive_experiment(model, args.k, args.reps, args.seed, args.epsilon,
                                          alpha=args.alpha, sigma_source=args.sigma_source,
                                          workers=args.workers)
    row = rep.as_dict()
    row["tvp_rel_band_lower"], row["tvp_rel_band_upper"] = row.pop("tvp_rel_band")
    cols = list(row)
    return render(_metadata(args), cols, [row], args.json), EXIT_OK


def cmd_convergence(args):
    model = _model(args.model)
    pts = experiments.convergence(model, args.expected_costs, args.reps, args.seed, args.alpha,
                                  workers=args.workers)
    rows = [asdict(p) for p in pts]
    cols = list(rows[0])
    return render(_metadata(args), cols, rows, args.json), EXIT_OK


def cmd_compare_ratio(args):
    model = _model(args.model)
    rows = [asdict(experiments.ratio_study(model, n, args.reps, args.seed, workers=args.workers))
            for n in args.n]
    cols = list(rows[0])
    return render(_metadata(args), cols, rows, args.json), EXIT_OK


def cmd_validate(args):
    checks = run_suite(args.suite, args.seed)
    rows = [asdict(c) for c in checks]
    failed = sum(not c.passed for c in checks)
    meta = _metadata(args, checks=len(checks), failed=failed)
    return render(meta, ["suite", "name", "passed", "detail"], rows, args.json), (
        EXIT_VALIDATION if failed else EXIT_OK
    )


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="reciprocal-mc", description="Unbiased randomized-truncation estimation of 1/E Z.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(p, seed=True, model=True):
        if model:
            p.add_argument("--model", required=True, help="bernoulli:P | uniform:B | discrete:V1,V2@P1,P2")
        if seed:
            p.add_argument("--seed", type=int, default=0)
            p.add_argument("--workers", type=int, default=1, help="processes; never changes output")
        p.add_argument("--out", help="output file (default stdout)")
        p.add_argument("--json", action="store_true", help="write one JSON document instead of CSV")

    p = sub.add_parser("curve", help="closed-form variance and TVP over a w grid")
    common(p, seed=False)
    p.add_argument("--wmin", type=float)
    p.add_argument("--wmax", type=float)
    p.add_argument("--points", type=int, default=99)
    p.set_defaults(func=cmd_curve)

    p = sub.add_parser("estimate", help="replicated draws with Laplace intervals")
    common(p)
    p.add_argument("--w", type=float, required=True)
    p.add_argument("--law", choices=["geometric", "tvm"], default="geometric")
    p.add_argument("--p-scale", type=float, default=1.0, help="use geometric(p_scale * p_w)")
    p.add_argument("--reps", type=int, default=1)
    p.add_argument("--alpha", type=float, default=0.05)
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("adaptive-experiment", help="two-phase estimator with a pilot of size k")
    common(p)
    size = p.add_mutually_exclusive_group(required=True)
    size.add_argument("--k", type=int, help="pilot size")
    size.add_argument("--budget", type=int, help="total expected Z-draws; the pilot gets half (k = budget // 2)")
    p.add_argument("--reps", type=int, default=10_000)
    p.add_argument("--epsilon", type=float, help="known lower bound on 1/E Z (default 1/b)")
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--sigma-source", choices=["pilot", "analytic"], default="pilot")
    p.set_defaults(func=cmd_adaptive)

    p = sub.add_parser("convergence", help="KS distance of standardized errors to the Laplace law")
    common(p)
    p.add_argument("--expected-costs", type=_float_list, default=[1e3, 1e4])
    p.add_argument("--reps", type=int, default=10_000)
    p.add_argument("--alpha", type=float, default=0.05)
    p.set_defaults(func=cmd_convergence)

    p = sub.add_parser("compare-ratio", help="bias and variance of the ratio estimator 1/Zbar")
    common(p)
    p.add_argument("--n", type=_int_list, default=[100, 10_000])
    p.add_argument("--reps", type=int, default=10_000)
    p.set_defaults(func=cmd_compare_ratio)

    p = sub.add_parser("validate", help="run invariant suites; exit 2 on failure")
    p.add_argument("--suite", choices=["all", *SUITES], default="all")
    p.add_argument("--seed", type=int, default=7)
    common(p, seed=False, model=False)
    p.set_defaults(func=cmd_validate)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "workers", 1) < 1:
        parser.error("--workers must be >= 1")
    try:
        text, status = args.func(args)
    except (UsageError, InfeasibleWError, DegenerateModelError, ValueError) as exc:
        print(f"reciprocal-mc: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    if args.out:
        with open(args.out, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return status


if __name__ == "__main__":
    sys.exit(main())
