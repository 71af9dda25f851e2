"""Command-line interface: ``robsure {estimate,simulate,rolling,bench}``.

Exit codes: 0 on success, 1 for runtime and data errors, 2 for usage and
validation errors.
"""

import argparse
import csv
import logging
import os
import sys

import numpy as np

from .estimators import EstimatorKind, FixedPointConfig
from .exceptions import IoError, ParseError, RobsureError
from .rolling import WindowConfig, load_returns_csv, rolling_report
from .simulate import load_config, run_scenario, time_methods
from .sure import CriterionKind, SelectionRule, estimate_dimension

THREADS_ENV = "ROBSURE_THREADS"

logger = logging.getLogger("robsure")


def _default_threads():
    try:
        return max(1, int(os.environ.get(THREADS_ENV, "1")))
    except ValueError:
        return 1


def _positive_int(text):
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"must be a positive integer, got {text}")
    return value


def read_matrix_csv(path):
    """Read a header line followed by rows of numbers."""
    try:
        with open(path, encoding="utf-8", newline="") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc.strerror}") from None
    if len(rows) < 2:
        raise ParseError(f"{path}: expected a header and at least one data row")
    width = len(rows[0])
    data = []
    for lineno, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        if len(row) != width:
            raise ParseError(f"{path}, line {lineno}: expected {width} fields, got {len(row)}")
        try:
            data.append([float(c) for c in row])
        except ValueError:
            raise ParseError(f"{path}, line {lineno}: non-numeric field") from None
    return np.array(data)


def _write_text(path, text):
    try:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc.strerror}") from None


def _fp_config(args):
    if args.tol is None and args.max_iter is None:
        return None
    return FixedPointConfig(
        tol=1e-8 if args.tol is None else args.tol,
        max_iter=200 if args.max_iter is None else args.max_iter,
    )


def _add_method_flags(parser):
    parser.add_argument("--estimator", choices=[k.value for k in EstimatorKind], default="tyler")
    parser.add_argument("--criterion", choices=[k.value for k in CriterionKind], default="sure2")
    parser.add_argument("--rule", choices=["argmin", "cp"], default="argmin")
    parser.add_argument("--tol", type=float, help="fixed-point tolerance")
    parser.add_argument("--max-iter", type=_positive_int, help="fixed-point iteration budget")


def cmd_estimate(args):
    X = read_matrix_csv(args.input)
    d_hat, curve = estimate_dimension(X, args.estimator, args.criterion, args.rule, _fp_config(args))
    if args.out:
        _write_text(args.out, curve.to_json(indent=2) + "\n")
    print(d_hat)
    return 0


def cmd_simulate(args):
    config = load_config(args.config)
    result = run_scenario(config, threads=args.threads)
    if args.out_csv:
        _write_text(args.out_csv, result.to_csv(include_timing=args.record_timing))
    if args.out_json:
        _write_text(args.out_json, result.to_json(include_timing=args.record_timing))
    if not (args.out_csv or args.out_json):
        sys.stdout.write(result.to_csv(include_timing=args.record_timing))
    return 0


def cmd_rolling(args):
    series = load_returns_csv(args.input)
    cfg = WindowConfig(args.window, args.estimator, args.criterion, args.rule)
    if cfg.length > series.T:
        raise RobsureError(f"window length {cfg.length} exceeds series length {series.T}")
    curve = rolling_report(series, cfg, _fp_config(args), args.out_prefix, threads=args.threads)
    print(f"{len(curve.raw)} windows; outputs at {args.out_prefix}.csv and {args.out_prefix}.json")
    return 0


def cmd_bench(args):
    config = load_config(args.config)
    result = time_methods(config)
    text = result.to_csv(include_timing=True)
    if args.out:
        _write_text(args.out, text)
    else:
        sys.stdout.write(text)
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="robsure",
        description="Robust SURE-based estimation of latent signal dimension.",
    )
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress and failures")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("estimate", help="estimate the dimension of one data matrix")
    p.add_argument("--input", required=True, help="CSV with a header and one observation per row")
    _add_method_flags(p)
    p.add_argument("--out", help="write the criterion curve as JSON")
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("simulate", help="run a simulation scenario from a JSON config")
    p.add_argument("--config", required=True)
    p.add_argument("--out-csv")
    p.add_argument("--out-json")
    p.add_argument("--threads", type=_positive_int, default=_default_threads(),
                   help=f"worker threads (default from ${THREADS_ENV}, else 1)")
    p.add_argument("--record-timing", action="store_true",
                   help="include wall-clock times (makes outputs non-reproducible)")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("rolling", help="rolling-window analysis of a return series")
    p.add_argument("--input", required=True, help="CSV with header 'date,<label>,...'")
    p.add_argument("--window", type=int, required=True, help="even window length")
    _add_method_flags(p)
    p.add_argument("--out-prefix", required=True)
    p.add_argument("--threads", type=_positive_int, default=_default_threads())
    p.set_defaults(func=cmd_rolling)

    p = sub.add_parser("bench", help="time methods serially on a scenario config")
    p.add_argument("--config", required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.ERROR,
        format="%(levelname)s %(name)s: %(message)s",
    )
    if args.command == "rolling" and (args.window < 4 or args.window % 2):
        parser.error(f"--window must be an even integer >= 4, got {args.window}")
    try:
        return args.func(args)
    except RobsureError as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    except np.linalg.LinAlgError as exc:
        print(f"LinAlgError: {exc}", file=sys.stderr)
        return 1
