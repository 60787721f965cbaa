"""Command-line interface: interval, coverage, and sweep subcommands.

Exit codes: 0 on success, 2 for input validation problems, 3 for numeric
failures inside a computation.
"""

import argparse
import math
import sys

import numpy as np

from .exact import FUNCTIONAL_KINDS
from .harness import (
    METHODS,
    SWEEP_AXES,
    ExperimentConfig,
    emit_report,
    run_coverage,
    run_interval,
    run_sweep,
    validate_counts,
)
from .model import SampleSizes, SurveyCounts
from .stats import KINDS

_CLI_METHODS = METHODS + ("functional",)

# config-file keys and how to coerce their stored strings
_CONFIG_COERCE = {
    "x": str, "n": str, "method": str, "stat": str, "values": str,
    "param": str, "format": str, "out": str, "functional_kind": str,
    "alpha": float, "gamma": float,
    "grid": int, "B": int, "reps": int, "seed": int, "workers": int,
    "inner_b": int,
}


def _parse_ints(text: str, flag: str):
    try:
        return tuple(int(v) for v in text.split(","))
    except ValueError:
        raise ValueError(f"{flag} expects comma-separated integers, got {text!r}")


def _parse_floats(text: str, flag: str):
    try:
        return tuple(float(v) for v in text.split(","))
    except ValueError:
        raise ValueError(f"{flag} expects comma-separated numbers, got {text!r}")


def _parse_list(text: str, choices, flag: str):
    items = tuple(v.strip() for v in text.split(",") if v.strip())
    if not items:
        raise ValueError(f"{flag} is empty")
    for v in items:
        if v not in choices:
            raise ValueError(f"{flag} value {v!r} not in {tuple(choices)}")
    return items


def load_config(path: str) -> dict:
    """Flat key=value lines; '#' starts a comment; unknown keys rejected."""
    out = {}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(
                    f"{path}:{lineno}: expected key=value, got {line!r}"
                )
            key, _, value = line.partition("=")
            key = key.strip().replace("-", "_")
            value = value.strip()
            if key not in _CONFIG_COERCE:
                raise ValueError(f"{path}:{lineno}: unknown key {key!r}")
            try:
                out[key] = _CONFIG_COERCE[key](value)
            except ValueError:
                raise ValueError(
                    f"{path}:{lineno}: bad value {value!r} for {key!r}"
                )
    return out


def _add_common(sub):
    sub.add_argument("--x", default="50,2,103",
                     help="counts x1,x2,x3 (survey, specificity, sensitivity)")
    sub.add_argument("--n", default="3300,401,122",
                     help="sample sizes n1,n2,n3")
    sub.add_argument("--alpha", type=float, default=0.05,
                     help="two-sided error level (default 0.05)")
    sub.add_argument("--method", default="delta",
                     help=f"comma list from {_CLI_METHODS}")
    sub.add_argument("--stat", default="pi_tilde_c",
                     help=f"comma list from {tuple(KINDS)} (inversion methods)")
    sub.add_argument("--gamma", type=float, default=1e-3,
                     help="nuisance-region error budget for exact methods")
    sub.add_argument("--grid", type=int, default=10, dest="grid",
                     help="lattice points per nuisance axis (exact methods)")
    sub.add_argument("--B", type=int, default=None, dest="B",
                     help="bootstrap draws (default 1e5 pb/bca, 1e4 otherwise)")
    sub.add_argument("--reps", type=int, default=None,
                     help="Monte Carlo replicates per grid point")
    sub.add_argument("--seed", type=int, default=0, help="master seed")
    sub.add_argument("--config", default=None,
                     help="key=value file; explicit flags override it")
    sub.add_argument("--format", default="table",
                     choices=("table", "csv", "json-lines"))
    sub.add_argument("--out", default=None, help="write output to this path")
    sub.add_argument("--workers", type=int, default=1,
                     help="parallel worker processes")
    sub.add_argument("--inner-b", type=int, default=200, dest="inner_b",
                     help="inner draws for bootstrap-standardized roots")
    sub.add_argument("--functional-kind", default="difference",
                     dest="functional_kind", choices=FUNCTIONAL_KINDS,
                     help="two-sample functional for --method functional")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="prevci",
        description="Confidence intervals for prevalence estimated from "
                    "an imperfect diagnostic test with external calibration "
                    "samples.",
    )
    subs = parser.add_subparsers(dest="cmd", required=True)
    table = {}
    for name, blurb in (
        ("interval", "intervals for one observed dataset"),
        ("coverage", "Monte Carlo coverage at the observed frequencies"),
        ("sweep", "coverage along a one-parameter grid"),
    ):
        sub = subs.add_parser(name, help=blurb)
        _add_common(sub)
        table[name] = sub
    table["sweep"].add_argument(
        "--param", default=None, choices=SWEEP_AXES,
        help="which axis to sweep",
    )
    table["sweep"].add_argument(
        "--values", default=None,
        help="comma list of grid values (default: auto grid)",
    )
    return parser, table


def _interval_text(rows, alpha, fmt):
    level = 1.0 - alpha
    if fmt == "csv":
        lines = ["method,statistic,lower,upper,level"]
        for m, s, iv in rows:
            lines.append(
                f"{m},{s},{iv.lower:.6g},{iv.upper:.6g},{level:.6g}"
            )
        return "\n".join(lines) + "\n"
    if fmt == "json-lines":
        import json

        lines = []
        for m, s, iv in rows:
            lines.append(json.dumps({
                "method": m,
                "statistic": s,
                "lower": None if not math.isfinite(iv.lower) else
                float(f"{iv.lower:.6g}"),
                "upper": None if not math.isfinite(iv.upper) else
                float(f"{iv.upper:.6g}"),
                "level": float(f"{level:.6g}"),
                "support": list(iv.support),
                "diagnostics": list(iv.diagnostics),
            }, default=str))
        return "\n".join(lines) + "\n"
    head = ("method", "statistic", "lower", "upper", "level", "notes")
    body = [
        (m, s or "-", f"{iv.lower:.6g}", f"{iv.upper:.6g}", f"{level:g}",
         "; ".join(iv.diagnostics))
        for m, s, iv in rows
    ]
    widths = [
        max(len(head[i]), *(len(r[i]) for r in body)) if body else len(head[i])
        for i in range(len(head))
    ]
    lines = ["  ".join(h.ljust(w) for h, w in zip(head, widths)).rstrip()]
    lines += [
        "  ".join(v.ljust(w) for v, w in zip(r, widths)).rstrip()
        for r in body
    ]
    return "\n".join(lines) + "\n"


def _cmd_interval(args) -> int:
    methods = _parse_list(args.method, _CLI_METHODS, "--method")
    stats = _parse_list(args.stat, tuple(KINDS), "--stat")
    x = _parse_ints(args.x, "--x")
    n = _parse_ints(args.n, "--n")
    rows = run_interval(
        x, n, methods=methods, statistics=stats, alpha=args.alpha,
        gamma=args.gamma, grid_g=args.grid, b_replicates=args.B,
        seed=args.seed, inner_b=args.inner_b,
        functional_kind=args.functional_kind,
    )
    print(_interval_text(rows, args.alpha, "table"), end="")
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(_interval_text(rows, args.alpha, args.format))
    return 0


def _experiment_config(args, sweep_param="", sweep_values=()) -> ExperimentConfig:
    methods = _parse_list(args.method, _CLI_METHODS, "--method")
    if "functional" in methods:
        raise ValueError(
            "the functional analysis is a single-dataset interval; "
            "coverage and sweep do not support it"
        )
    stats = _parse_list(args.stat, tuple(KINDS), "--stat")
    x = _parse_ints(args.x, "--x")
    n = _parse_ints(args.n, "--n")
    if len(x) != 3 or len(n) != 3:
        raise ValueError("three samples are required (survey, specificity, "
                         "sensitivity)")
    validate_counts(x, n)
    counts = SurveyCounts(x[0], x[1], x[2], SampleSizes(n[0], n[1], n[2]))
    return ExperimentConfig(
        x=counts, methods=methods, statistics=stats, alpha=args.alpha,
        gamma=args.gamma, grid_g=args.grid,
        b_replicates=args.B if args.B else 10_000,
        replicates=args.reps, inner_b=args.inner_b,
        sweep_param=sweep_param, sweep_values=sweep_values,
        seed=args.seed, workers=args.workers,
    )


def _emit(report, args) -> int:
    text = emit_report(report, args.format)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
    else:
        print(text, end="")
    return 0


def _cmd_coverage(args) -> int:
    return _emit(run_coverage(_experiment_config(args)), args)


def _cmd_sweep(args) -> int:
    if not args.param:
        raise ValueError("sweep needs --param (one of %s)" % (SWEEP_AXES,))
    values = ()
    if args.values:
        values = tuple(sorted(_parse_floats(args.values, "--values")))
    cfg = _experiment_config(args, sweep_param=args.param, sweep_values=values)
    return _emit(run_sweep(cfg), args)


def main(argv=None) -> int:
    parser, table = build_parser()
    try:
        args, _ = parser.parse_known_args(argv)
        if args.config:
            loaded = load_config(args.config)
            if "param" in loaded and args.cmd != "sweep":
                raise ValueError("config key 'param' only applies to sweep")
            table[args.cmd].set_defaults(**loaded)
        args = parser.parse_args(argv)
        handler = {
            "interval": _cmd_interval,
            "coverage": _cmd_coverage,
            "sweep": _cmd_sweep,
        }[args.cmd]
        return handler(args)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
