#!/usr/bin/env python3
"""
Command-line interface for PU training with PUAL and the GLLC baseline.

    python cli.py synth --mean-p2 50 --seed 1 --out data.csv
    python cli.py split --mode single-training-set --labeled-fraction 1/4 --in data.csv \
        --train-out train.csv --test-out test.csv
    python cli.py train --model pual-linear --data train.csv --lambda 1 --sigma 1 --cu 0.1 --out model.json
    python cli.py predict --model model.json --data test.csv --out preds.csv
    python cli.py eval --preds preds.csv --truth test.csv
    python cli.py tune --data train.csv --model pual-linear --preset synthetic --out tune.json
    python cli.py reproduce-table1 --out-dir results --reduced-grid

Exit codes: 0 success, 1 usage or validation error, 2 data or file error,
3 numerical failure.
"""

import argparse
import json
import logging
import math
import os
import sys
from functools import wraps
from typing import Dict, List, Optional, Sequence

from dataset import (SINGLE_TRAINING_SET, SPLIT_MODES, SYNTH_MEAN_P2_VALUES, SplitSpec, SynthSpec, derive_seed,
                     load_eval_csv, load_features_csv, load_gram_csv, load_predictions_csv, load_pu_csv, split,
                     synth_generate, write_eval_csv, write_predictions_csv, write_pu_csv)
from errors import DimensionMismatch, InvalidHyperparameter, PUALError
from estimators import (GLLC_KERNEL, GLLC_LINEAR, KERNEL_CHOICES, KERNEL_MODEL_KINDS, MODEL_KINDS, PUAL_KERNEL,
                        PUAL_LINEAR)
from estimators import make_kernel, train as train_model
from evaluation import SCENARIOS, ConfusionCounts, GridSpec, PufScenario, f1_score, tune
from model_store import ExperimentLedger, load_model, save_model, save_tune_result
from pual_kernel import PRECOMPUTED, KernelSpec
from pual_linear import Hyperparams, StopCriteria
from similarity import KnnParams

logger = logging.getLogger(__name__)

PRESETS = ("synthetic", "real", "reduced")
REPLICATES = 5
LEDGER_NAME = "table1.db"
REPORT_NAME = "table1_report.txt"


class ArgumentParser(argparse.ArgumentParser):
    """Usage errors exit with code 1"""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def command(handler):
    """Run a sub-command, turning toolkit and file errors into one-line diagnostics and exit codes"""
    @wraps(handler)
    def guarded(args) -> int:
        try:
            handler(args)
        except PUALError as err:
            print(f"pual {args.command}: {type(err).__name__}: {err}", file=sys.stderr)
            return err.exit_code
        except OSError as err:
            print(f"pual {args.command}: {err}", file=sys.stderr)
            return 2
        return 0
    return guarded


# Argument helpers

def _require(args, dest: str, flag: str):
    value = getattr(args, dest, None)
    if value is None:
        raise InvalidHyperparameter(f"{flag} is required")
    return value


def _positive(args, dest: str, flag: str) -> float:
    value = _require(args, dest, flag)
    if not math.isfinite(value) or value <= 0:
        raise InvalidHyperparameter(f"{flag} must be a positive real, got {value}")
    return float(value)


def hyperparams_from_args(args) -> Hyperparams:
    if args.knn < 1:
        raise InvalidHyperparameter(f"--knn must be a positive integer, got {args.knn}")
    return Hyperparams(c_p=_positive(args, "cp", "--cp"), c_u=_positive(args, "cu", "--cu"),
                       lam=_positive(args, "lam", "--lambda"), mu1=_positive(args, "mu1", "--mu1"),
                       knn=KnnParams(args.knn, _positive(args, "sigma", "--sigma")))


def stop_from_args(args) -> StopCriteria:
    if math.isnan(args.tol) or args.tol < 0:
        raise InvalidHyperparameter(f"--tol must be non-negative, got {args.tol}")
    if args.max_iter < 0:
        raise InvalidHyperparameter(f"--max-iter must be non-negative, got {args.max_iter}")
    return StopCriteria(args.tol, args.max_iter)


def kernel_from_args(args, hp: Hyperparams):
    choice = args.kernel
    if args.model not in KERNEL_MODEL_KINDS:
        if choice not in (None, "none"):
            raise InvalidHyperparameter(f"--kernel {choice} needs a kernel model, not {args.model}")
        return None
    if choice in (None, "none"):
        choice = "rbf"
    if choice == PRECOMPUTED:
        _require(args, "gram", "--gram")
        return KernelSpec(PRECOMPUTED)
    return make_kernel(choice, hp)


# Commands

@command
def cmd_synth(args):
    data = synth_generate(SynthSpec(_require(args, "mean_p2", "--mean-p2"), args.seed))
    write_eval_csv(data, args.out)
    print(f"Wrote {data.n} rows to {args.out}")


@command
def cmd_split(args):
    spec = SplitSpec(args.mode, gamma_prime=args.gamma_prime, labeled_fraction=args.labeled_fraction,
                     test_fraction=args.test_fraction, seed=args.seed)
    train, test = split(load_eval_csv(args.in_path), spec)
    write_pu_csv(train, args.train_out)
    write_eval_csv(test, args.test_out)
    print(f"Wrote training set (n_p={train.n_p}, n_u={train.n_u}) to {args.train_out}")
    print(f"Wrote test set ({test.n} rows) to {args.test_out}")


@command
def cmd_train(args):
    hp = hyperparams_from_args(args)
    stop = stop_from_args(args)
    kernel = kernel_from_args(args, hp)
    data = load_pu_csv(args.data)
    gram = load_gram_csv(args.gram) if kernel is not None and kernel.kind == PRECOMPUTED else None

    model, report = train_model(args.model, data, hp, stop, kernel, not args.no_standardize,
                                precomputed_gram=gram)
    envelope = save_model(args.out, model, hp, report)
    print(f"Trained {args.model}: {report.iterations} iterations, converged={report.converged}")
    if envelope['train_rows']:
        print(f"Model retains {envelope['train_rows']} training rows")
    print(f"Wrote model to {args.out}")


@command
def cmd_predict(args):
    model, _ = load_model(args.model)
    features, _ = load_features_csv(args.data)
    scores, labels = model.predict(features)
    write_predictions_csv(scores, labels, args.out)
    print(f"Wrote {len(scores)} predictions to {args.out}")


@command
def cmd_eval(args):
    _, predicted = load_predictions_csv(args.preds)
    truth = load_eval_csv(args.truth)
    if len(predicted) != truth.n:
        raise DimensionMismatch(f"{args.preds} has {len(predicted)} rows, {args.truth} has {truth.n}")
    counts = ConfusionCounts.from_labels(predicted, truth.labels)
    print(f"f1={f1_score(counts):.6f} tp={counts.tp} fp={counts.fp} fn={counts.fn} tn={counts.tn}")


@command
def cmd_tune(args):
    stop = stop_from_args(args)
    if args.folds < 2:
        raise InvalidHyperparameter(f"--folds must be at least 2, got {args.folds}")
    greedy = args.greedy if args.greedy is not None else args.preset == "real"
    kernel = args.kernel if args.kernel not in (None, "none") else "rbf"
    result = tune(load_pu_csv(args.data), GridSpec.preset(args.preset), args.model, PufScenario(args.scenario),
                  args.seed, args.folds, greedy, stop, kernel, not args.no_standardize, args.n_jobs)
    save_tune_result(args.out, result)
    best = result.best
    print(f"best lambda={best.lam!r} sigma={best.sigma!r} c_u={best.c_u!r} puf={result.best_score:.6f}")
    print(f"Wrote tuning result to {args.out}")


# Synthetic study

# (name, PUAL kind, GLLC kind) compared column against column
STUDY_PAIRS = (("linear", PUAL_LINEAR, GLLC_LINEAR), ("rbf", PUAL_KERNEL, GLLC_KERNEL))
LINEAR_SHORTFALL_MEAN_P2 = 200


def run_table1(out_dir: str, seed: int = 0, grid: Optional[GridSpec] = None, linear_only: bool = False,
               mean_p2_values: Sequence[float] = SYNTH_MEAN_P2_VALUES, replicates: int = REPLICATES,
               stop: StopCriteria = StopCriteria(), folds: int = 4, n_jobs: int = 1) -> ExperimentLedger:
    """
    For every mean_p2 and replicate: generate, split (70/30, a quarter of the
    training positives labeled), tune each method by 4-fold PUF, refit on the
    whole training set and record test F1 in the ledger.

    Both the linear and the rbf pair of PUAL and GLLC are run unless
    linear_only is set. The ledger in out_dir is cleared first, so it only
    ever holds the runs of one master seed.
    """
    grid = grid or GridSpec.synthetic()
    pairs = STUDY_PAIRS[:1] if linear_only else STUDY_PAIRS
    methods = [method for _, pual, gllc in pairs for method in (pual, gllc)]
    os.makedirs(out_dir, exist_ok=True)
    ledger = ExperimentLedger(os.path.join(out_dir, LEDGER_NAME))
    removed = ledger.clear_runs()
    if removed:
        logger.info("Cleared %d runs left in %s", removed, ledger.db_name)
    scenario = PufScenario(SINGLE_TRAINING_SET)

    for index, mean_p2 in enumerate(mean_p2_values):
        for replicate in range(replicates):
            seeds = tuple(derive_seed(seed, index, replicate, stream) for stream in range(3))
            data = synth_generate(SynthSpec(mean_p2, seeds[0]))
            train, test = split(data, SplitSpec.single_training_set(seed=seeds[1]))
            for method in methods:
                result = tune(train, grid, method, scenario, seeds[2], folds, False, stop, "rbf", True, n_jobs)
                hp = result.best_hyperparams()
                model, _ = train_model(method, train, hp, stop, "rbf")
                _, predicted = model.predict(test.features)
                f1 = f1_score(ConfusionCounts.from_labels(predicted, test.labels))
                ledger.record_run(mean_p2, replicate, method, seeds, hp.lam, hp.knn.sigma, hp.c_u, f1)
                logger.info("mean_p2=%g replicate=%d %s: F1 %.4f", mean_p2, replicate, method, f1)
    return ledger


def _ordering_checks(name: str, gaps: List[float]) -> List[str]:
    steps = [later >= earlier for earlier, later in zip(gaps, gaps[1:])]
    # four steps between five mean_p2 values
    needed = min(4, len(steps))
    return [
        f"# check {name}: PUAL > GLLC at every mean_p2: {'PASS' if all(gap > 0 for gap in gaps) else 'FAIL'}",
        f"# check {name}: gap non-decreasing: {sum(steps)} of {len(steps)} steps, "
        f"{'PASS' if sum(steps) >= needed else 'FAIL'}",
    ]


def table1_report(ledger: ExperimentLedger, seed: int, grid_name: str, reduced: bool) -> str:
    summary = {(row['mean_p2'], row['method']): row for row in ledger.get_summary()}
    mean_p2_values = sorted({key[0] for key in summary})
    methods = sorted({key[1] for key in summary})
    pairs = [pair for pair in STUDY_PAIRS if pair[1] in methods and pair[2] in methods]

    lines = [
        "# PUAL vs GLLC on synthetic trifurcate data: test F1 (%) as mean,std,n",
        f"# grid: {grid_name}; 4-fold CV on the PUF score (single-training-set); master seed {seed}",
    ]
    if reduced:
        lines.append("# reduced grid: magnitudes are indicative only; the ordering checks are the criteria")
    if any(name == "linear" for name, _, _ in pairs) and mean_p2_values and \
            mean_p2_values[-1] >= LINEAR_SHORTFALL_MEAN_P2:
        lines.append(f"# note: from mean_p2={LINEAR_SHORTFALL_MEAN_P2} on, linear PUAL can label every test row "
                     f"positive and trail linear GLLC; compare the rbf pair there")
    lines.append("mean_p2," + ",".join(f"{method}_mean,{method}_std,{method}_n" for method in methods)
                 + "".join(f",gap_{name}" for name, _, _ in pairs))

    gaps = {name: [] for name, _, _ in pairs}
    for mean_p2 in mean_p2_values:
        cells = []
        for method in methods:
            row = summary.get((mean_p2, method))
            cells.append(f"{row['mean']:.2f},{row['std']:.2f},{row['n']}" if row else ",,0")
        for name, pual_kind, gllc_kind in pairs:
            pual, gllc = summary.get((mean_p2, pual_kind)), summary.get((mean_p2, gllc_kind))
            gaps[name].append(pual['mean'] - gllc['mean'] if pual and gllc else float("nan"))
            cells.append(f"{gaps[name][-1]:.2f}")
        lines.append(f"{mean_p2:g}," + ",".join(cells))

    for name, _, _ in pairs:
        lines.extend(_ordering_checks(name, gaps[name]))
    for run in ledger.get_runs():
        lines.append(f"# run mean_p2={run['mean_p2']:g} replicate={run['replicate']} method={run['method']} "
                     f"data_seed={run['data_seed']} split_seed={run['split_seed']} tune_seed={run['tune_seed']} "
                     f"lambda={run['lam']!r} sigma={run['sigma']!r} c_u={run['c_u']!r}")
    return "\n".join(lines) + "\n"


@command
def cmd_reproduce_table1(args):
    stop = stop_from_args(args)
    grid_name = "reduced" if args.reduced_grid else "synthetic"
    ledger = run_table1(args.out_dir, args.seed, GridSpec.preset(grid_name), args.linear_only,
                        replicates=args.replicates, stop=stop, n_jobs=args.n_jobs)
    report_path = os.path.join(args.out_dir, REPORT_NAME)
    with open(report_path, "w") as handle:
        handle.write(table1_report(ledger, args.seed, grid_name, args.reduced_grid))
    print(f"Wrote {report_path}")


# Parser

def _add_stop_flags(parser):
    parser.add_argument("--tol", type=float, default=1e-6, help="primal residual tolerance")
    parser.add_argument("--max-iter", type=int, default=2000, help="maximum ADMM iterations")


def build_parser():
    parser = ArgumentParser(prog="pual", description="PU learning with PUAL and GLLC")
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging on stderr")
    parser.add_argument("--config", help="JSON file of defaults keyed by sub-command (and 'common')")
    subparsers = parser.add_subparsers(dest="command", required=True)
    commands = {}

    synth = subparsers.add_parser("synth", help="generate one synthetic trifurcate dataset")
    synth.add_argument("--mean-p2", type=float)
    synth.add_argument("--seed", type=int, default=0)
    synth.add_argument("--out", required=True)
    synth.set_defaults(handler=cmd_synth)
    commands["synth"] = synth

    split_cmd = subparsers.add_parser("split", help="build a PU training set and a ground-truth test set")
    split_cmd.add_argument("--mode", choices=SPLIT_MODES, required=True)
    split_cmd.add_argument("--gamma-prime", help="case-control labeled share of all positives, e.g. 7/17")
    split_cmd.add_argument("--labeled-fraction", help="single-training-set labeled share of training positives")
    split_cmd.add_argument("--test-fraction", default="3/10")
    split_cmd.add_argument("--seed", type=int, default=0)
    split_cmd.add_argument("--in", dest="in_path", required=True)
    split_cmd.add_argument("--train-out", required=True)
    split_cmd.add_argument("--test-out", required=True)
    split_cmd.set_defaults(handler=cmd_split)
    commands["split"] = split_cmd

    train_cmd = subparsers.add_parser("train", help="fit a model on a PU training file")
    train_cmd.add_argument("--model", choices=MODEL_KINDS, required=True)
    train_cmd.add_argument("--data", required=True)
    train_cmd.add_argument("--lambda", dest="lam", type=float)
    train_cmd.add_argument("--sigma", type=float)
    train_cmd.add_argument("--cu", type=float)
    train_cmd.add_argument("--cp", type=float, default=1.0)
    train_cmd.add_argument("--mu1", type=float, default=1.0)
    train_cmd.add_argument("--knn", type=int, default=5)
    train_cmd.add_argument("--kernel", choices=KERNEL_CHOICES + (PRECOMPUTED,))
    train_cmd.add_argument("--gram", help="square CSV Gram matrix for --kernel precomputed")
    train_cmd.add_argument("--no-standardize", action="store_true")
    _add_stop_flags(train_cmd)
    train_cmd.add_argument("--out", required=True)
    train_cmd.set_defaults(handler=cmd_train)
    commands["train"] = train_cmd

    predict_cmd = subparsers.add_parser("predict", help="score a feature file with a saved model")
    predict_cmd.add_argument("--model", required=True)
    predict_cmd.add_argument("--data", required=True)
    predict_cmd.add_argument("--out", required=True)
    predict_cmd.set_defaults(handler=cmd_predict)
    commands["predict"] = predict_cmd

    eval_cmd = subparsers.add_parser("eval", help="F1 of a predictions file against ground truth")
    eval_cmd.add_argument("--preds", required=True)
    eval_cmd.add_argument("--truth", required=True)
    eval_cmd.set_defaults(handler=cmd_eval)
    commands["eval"] = eval_cmd

    tune_cmd = subparsers.add_parser("tune", help="grid search (and greedy refinement) on the PUF score")
    tune_cmd.add_argument("--data", required=True)
    tune_cmd.add_argument("--model", choices=MODEL_KINDS, required=True)
    tune_cmd.add_argument("--preset", choices=PRESETS, default="synthetic")
    tune_cmd.add_argument("--scenario", choices=SCENARIOS, default=SINGLE_TRAINING_SET)
    tune_cmd.add_argument("--folds", type=int, default=4)
    tune_cmd.add_argument("--seed", type=int, default=0)
    tune_cmd.add_argument("--kernel", choices=("rbf", "linear-via-b"))
    tune_cmd.add_argument("--greedy", dest="greedy", action="store_true", default=None)
    tune_cmd.add_argument("--no-greedy", dest="greedy", action="store_false")
    tune_cmd.add_argument("--n-jobs", type=int, default=1)
    tune_cmd.add_argument("--no-standardize", action="store_true")
    _add_stop_flags(tune_cmd)
    tune_cmd.add_argument("--out", required=True)
    tune_cmd.set_defaults(handler=cmd_tune)
    commands["tune"] = tune_cmd

    table1 = subparsers.add_parser("reproduce-table1", help="run the synthetic PUAL vs GLLC study")
    table1.add_argument("--out-dir", required=True)
    table1.add_argument("--seed", type=int, default=0)
    table1.add_argument("--reduced-grid", action="store_true")
    table1.add_argument("--linear-only", action="store_true", help="skip the rbf-kernel PUAL and GLLC runs")
    table1.add_argument("--replicates", type=int, default=REPLICATES)
    table1.add_argument("--n-jobs", type=int, default=1)
    _add_stop_flags(table1)
    table1.set_defaults(handler=cmd_reproduce_table1)
    commands["reproduce-table1"] = table1

    return parser, commands


def load_config(path: str, command_name: str, subparser) -> Dict:
    """Defaults from the 'common' section overlaid by the sub-command's own section"""
    with open(path, encoding="utf-8") as handle:
        try:
            config = json.load(handle)
        except (json.JSONDecodeError, UnicodeDecodeError) as err:
            raise InvalidHyperparameter(f"--config {path}: {err}") from err
    if not isinstance(config, dict):
        raise InvalidHyperparameter(f"--config {path}: expected a JSON object")

    known = {action.dest for action in subparser._actions}
    defaults = {}
    for section in ("common", command_name):
        entries = config.get(section, {})
        for key, value in entries.items():
            dest = key.lstrip("-").replace("-", "_")
            dest = "lam" if dest == "lambda" else dest
            if dest in known:
                defaults[dest] = value
            elif section == command_name:
                raise InvalidHyperparameter(f"--config {path}: unknown option {key!r} for {command_name}")
    return defaults


def main(argv: Optional[List[str]] = None) -> int:
    parser, commands = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)

    if args.config:
        try:
            commands[args.command].set_defaults(**load_config(args.config, args.command, commands[args.command]))
        except PUALError as err:
            print(f"pual: {err}", file=sys.stderr)
            return err.exit_code
        except OSError as err:
            print(f"pual: --config: {err}", file=sys.stderr)
            return 2
        args = parser.parse_args(argv)

    try:
        return args.handler(args)
    except KeyboardInterrupt:
        print("\nInterrupted", file=sys.stderr)
        return 130


if __name__ == "__main__":
    sys.exit(main())
