"""Command-line entry point: ``bkernn fit | predict | experiment``.

Exit codes: 0 success, 2 bad flags, 3 data errors, 4 numerical failure.
"""

from __future__ import annotations

import argparse
import logging
import sys

import numpy as np

from .datagen import DataError, load_csv, write_rows
from .estimators import default_lambda, load_model, predict, save_model
from .experiments import EXPERIMENTS, RunSpec, default_jobs, spec_from_manifest, write_run
from .metrics import r2_score
from .penalties import PenaltyKind
from .trainer import NumericalError, TrainConfig, fit

logger = logging.getLogger("bkernn")

EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_NUMERIC = 4

PENALTY_CHOICES = ["basic", "variable", "feature", "concave-variable", "concave-feature"]


class UsageError(Exception):
    pass


def _lambda_arg(text: str):
    if text == "auto":
        return "auto"
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a positive number or 'auto', got {text!r}") from None
    if not (np.isfinite(value) and value > 0):
        raise argparse.ArgumentTypeError(f"lambda must be positive, got {text!r}")
    return value


def _positive(kind):
    def parse(text):
        try:
            value = kind(text)
        except ValueError:
            raise argparse.ArgumentTypeError(f"invalid value {text!r}") from None
        if not value > 0:
            raise argparse.ArgumentTypeError(f"must be positive, got {text!r}")
        return value

    return parse


def _nonneg_int(text):
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid integer {text!r}") from None
    if value < 0:
        raise argparse.ArgumentTypeError(f"must be non-negative, got {text!r}")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="bkernn", description="Brownian kernel neural network regression.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to standard error")
    sub = parser.add_subparsers(dest="command", required=True)

    f = sub.add_parser("fit", help="train a model on a CSV file")
    f.add_argument("--data", required=True, help="training CSV with a header row")
    f.add_argument("--target", required=True, help="name of the response column")
    f.add_argument("--penalty", choices=PENALTY_CHOICES, default="basic")
    f.add_argument("--m", type=_positive(int), default=20, help="number of particles")
    f.add_argument("--lambda", dest="lam", type=_lambda_arg, default="auto",
                   help="regularisation, or 'auto' for 2 max ||x|| / n (default)")
    f.add_argument("--s", type=_positive(float), default=1.0, help="concavity of the concave penalties")
    f.add_argument("--gamma0", type=_positive(float), default=500.0, help="initial step size")
    f.add_argument("--iters", type=_positive(int), default=20)
    f.add_argument("--kernel", choices=["brownian", "exponential", "gaussian"], default="brownian")
    f.add_argument("--seed", type=_nonneg_int, default=0)
    f.add_argument("--out", required=True, help="model file to write")
    f.add_argument("--report", help="training report CSV (default: <out>.report.csv)")

    p = sub.add_parser("predict", help="predict with a saved model")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True, help="predictions CSV to write")
    p.add_argument("--target", help="response column; when given, R^2 is printed")

    e = sub.add_parser("experiment", help="regenerate a synthetic experiment as CSV tables")
    e.add_argument("name", nargs="?", help=f"one of {', '.join(EXPERIMENTS)}")
    e.add_argument("--seed", type=_nonneg_int, default=0, help="first data seed")
    e.add_argument("--seeds", type=_positive(int), help="number of seeds (default: per experiment)")
    e.add_argument("--scale", type=_positive(float), default=1.0, help="shrink sample sizes and dimensions")
    e.add_argument("--out", default="results", help="output directory")
    e.add_argument("--jobs", type=_positive(int), help="worker processes (default: $BKERNN_JOBS or CPU count)")
    e.add_argument("--from-manifest", help="re-run the configuration recorded in a manifest.txt")
    return parser


def cmd_fit(args) -> int:
    ds = load_csv(args.data, args.target)
    lam = default_lambda(ds.X) if args.lam == "auto" else args.lam
    logger.info("lambda=%r", lam)
    cfg = TrainConfig(
        m=args.m, lam=lam, gamma0=args.gamma0, n_iter=args.iters,
        penalty=PenaltyKind.parse(args.penalty, args.s), kernel=args.kernel, seed=args.seed,
    )
    state, report = fit(ds.X, ds.y, cfg)
    save_model(state, args.out)
    report_path = args.report or f"{args.out}.report.csv"
    rows = [[0, report.objective_trace[0], cfg.gamma0, 0]]
    rows += [
        [i + 1, obj, step, halvings]
        for i, (obj, step, halvings) in enumerate(
            zip(report.objective_trace[1:], report.step_trace, report.backtrack_counts)
        )
    ]
    write_rows(report_path, ["iteration", "objective", "step_size", "halvings"], rows)
    print(f"lambda={lam!r}")
    print(f"objective={report.objective_trace[-1]!r}")
    if np.ptp(ds.y) > 0:
        print(f"train_r2={r2_score(ds.y, predict(state, ds.X))!r}")
    return 0


def cmd_predict(args) -> int:
    try:
        model = load_model(args.model)
    except (OSError, ValueError, KeyError) as exc:
        raise DataError(f"cannot read model {args.model}: {exc}") from exc
    ds = load_csv(args.data, args.target)
    if ds.X.shape[1] != model.X_train.shape[1]:
        raise DataError(f"{args.data}: {ds.X.shape[1]} covariate columns, model expects {model.X_train.shape[1]}")
    pred = predict(model, ds.X)
    write_rows(args.out, ["prediction"], ([v] for v in pred))
    if args.target and np.ptp(ds.y) > 0:
        print(f"r2={r2_score(ds.y, pred)!r}")
    return 0


def cmd_experiment(args, argv) -> int:
    if args.from_manifest:
        try:
            spec = spec_from_manifest(args.from_manifest)
        except (OSError, ValueError, KeyError) as exc:
            raise DataError(f"cannot use manifest {args.from_manifest}: {exc}") from exc
    else:
        if args.name not in EXPERIMENTS:
            raise UsageError(f"experiment must be one of {', '.join(EXPERIMENTS)}, got {args.name!r}")
        if args.scale > 1:
            raise UsageError("--scale must be in (0, 1]")
        spec = RunSpec(args.name, args.seed, args.scale, args.seeds)
    jobs = args.jobs or default_jobs()
    paths = write_run(spec, args.out, jobs=jobs, argv=argv, progress=logger.info)
    for key in sorted(paths):
        print(paths[key])
    return 0


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code not in (0, None) else 0
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "fit":
            return cmd_fit(args)
        if args.command == "predict":
            return cmd_predict(args)
        return cmd_experiment(args, argv)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"bkernn: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    # LinAlgError subclasses ValueError, so it is caught first
    except (NumericalError, np.linalg.LinAlgError, FloatingPointError) as exc:
        print(f"bkernn: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:  # DataError and invalid configurations
        print(f"bkernn: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except OSError as exc:
        print(f"bkernn: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
