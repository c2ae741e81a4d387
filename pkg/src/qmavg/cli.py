"""Command-line entry point: ``qmavg {tomography,rb,criteria,summarize}``.

Exit codes: 0 success, 2 invalid configuration, 3 simulation failure.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import harness
from .config import ExperimentConfig, build_config, load_config_file
from .errors import InvalidArgumentError, InvalidConfigurationError, QmavgError

log = logging.getLogger("qmavg")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RUNTIME = 3


def _int_list(text: str) -> list[int]:
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _add_experiment_flags(p: argparse.ArgumentParser) -> None:
    # defaults stay None so that config-file values are only overridden when given
    p.add_argument("--config", type=Path, help="YAML/JSON key-value file with the same keys as the flags")
    p.add_argument("--qubits", type=int)
    p.add_argument("--candidate-ranks", type=_int_list, metavar="R1,R2,...")
    p.add_argument("--true-rank", type=int)
    p.add_argument("--rb-true-model", choices=["zeroth", "first"])
    p.add_argument("--rb-prior-set", choices=["I", "II"])
    p.add_argument("--particles-per-model", type=int)
    p.add_argument("--batches", type=int, help="tomography batches, or RB sweeps of the length grid")
    p.add_argument("--shots-per-batch", type=int)
    p.add_argument("--sequence-lengths", type=_int_list, metavar="M1,M2,...")
    p.add_argument("--repetitions-per-length", type=int)
    p.add_argument("--trials", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--resample-threshold", type=float, help="resample when ESS < threshold * n")
    p.add_argument("--liu-west-a", type=float)
    p.add_argument("--prune-threshold", type=float)
    p.add_argument("--prior-scale", type=float)
    p.add_argument("--prior-scale-convention", choices=["variance", "stddev"])
    p.add_argument("--per-shot-updates", action=argparse.BooleanOptionalAction, default=None,
                   help="replay each batch as single shots (default) or update once per batch")
    p.add_argument("--include-identity", action="store_const", const=True)
    p.add_argument("--record-timing", action="store_const", const=True,
                   help="store wall_time_ms in records (breaks byte-identical reruns)")
    p.add_argument("--workers", type=int)
    p.add_argument("--out", dest="output_path", help="output file (default: stdout)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qmavg", description="Bayesian model averaging experiments")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    for name, help_text in (
        ("tomography", "rank selection for random Pauli-measurement tomography"),
        ("rb", "zeroth- vs first-order randomized-benchmarking decay models"),
    ):
        _add_experiment_flags(sub.add_parser(name, help=help_text))

    crit = sub.add_parser("criteria", help="AIC/BIC table for one simulated data set")
    crit.add_argument("--experiment", choices=["tomography", "rb"], default=None)
    _add_experiment_flags(crit)

    summ = sub.add_parser("summarize", help="median/quartile CSV from trial records")
    summ.add_argument("input", type=Path, help="JSON-lines file of trial records")
    summ.add_argument("--out", dest="output_path", help="CSV output file (default: stdout)")
    return parser


_NON_CONFIG = {"command", "verbose", "config", "experiment"}


def _config_from_args(experiment: str | None, args: argparse.Namespace) -> ExperimentConfig:
    file_values = load_config_file(args.config) if args.config else {}
    if experiment is None:
        experiment = file_values.get("experiment", "tomography")
    overrides = {k: v for k, v in vars(args).items() if k not in _NON_CONFIG}
    return build_config(experiment, file_values, overrides)


def _emit(text: str, path: str | None) -> None:
    if path:
        Path(path).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "summarize":
            try:
                records = harness.read_jsonl(args.input)
            except (OSError, ValueError) as exc:
                raise InvalidConfigurationError(f"cannot read records from {args.input}: {exc}") from exc
            _emit(harness.summary_csv(harness.summarize(records)), args.output_path)
            return EXIT_OK

        experiment = args.command if args.command in ("tomography", "rb") else args.experiment
        config = _config_from_args(experiment, args)
        if args.command == "criteria":
            _emit(harness.criteria_csv(harness.criteria_for_config(config)), config.output_path)
            return EXIT_OK

        log.info("running %d %s trial(s) with seed %d", config.trials, config.experiment, config.seed)
        records = harness.run_experiment(config)
        _emit(harness.dumps_records(records), config.output_path)
        failed = {r["trial_id"] for r in records if r["status"] == "failed"}
        if failed:
            log.warning("%d of %d trial(s) aborted with zero evidence", len(failed), config.trials)
        if len(failed) == config.trials:
            return EXIT_RUNTIME
        return EXIT_OK
    except (InvalidConfigurationError, InvalidArgumentError) as exc:
        print(f"qmavg: invalid configuration: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except QmavgError as exc:
        print(f"qmavg: simulation failed: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
