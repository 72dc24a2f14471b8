"""Command-line entry point for toneleak.

Usage:
    toneleak [--config PATH] [--seed N] [--out DIR] [--jobs N] <command> ...
    python -m toneleak gen
    python -m toneleak --out mitigated mitigate dataset --kind downsample --factor 2
    python -m toneleak train-eval dataset
    python -m toneleak sweep [--fixed-model]
    python -m toneleak plan --cutoff 180 --candidates 400 800 1600

Exit codes:
    0: success
    2: invalid configuration or arguments
    3: data error (missing or malformed files, unusable recordings)

Environment Variables:
    TONELEAK_LOG_LEVEL: Set logging level (DEBUG, INFO, WARNING, ERROR).
                        Default: INFO
"""

import argparse
import logging
import os
import sys
from collections.abc import Sequence
from dataclasses import replace
from pathlib import Path

from toneleak import __version__
from toneleak.controllers.experiment_controller import ExperimentController
from toneleak.exceptions import ConfigError, InvalidArgumentError, ToneLeakError
from toneleak.models.dtmf import DTMF_FREQUENCIES
from toneleak.models.experiment import ExperimentConfig
from toneleak.models.mitigation import MITIGATION_KINDS, MitigationConfig
from toneleak.utils.settings import load_experiment_config

# Configure logging
log_level = os.getenv("TONELEAK_LOG_LEVEL", "INFO").upper()
logging.basicConfig(
    level=getattr(logging, log_level, logging.INFO),
    format="%(asctime)s - %(name)s - %(levelname)s - %(message)s",
)

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="toneleak",
        description="Touchtone leakage through motion sensors: simulate, mitigate, attack.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("--config", type=Path, help="JSON experiment configuration")
    parser.add_argument("--seed", type=int, help="Override every seed in the configuration")
    parser.add_argument("--out", type=Path, help="Output directory")
    parser.add_argument("--jobs", type=int, help="Worker threads")
    parser.add_argument(
        "--log-level",
        choices=["DEBUG", "INFO", "WARNING", "ERROR"],
        help="Override TONELEAK_LOG_LEVEL",
    )

    commands = parser.add_subparsers(dest="command", required=True)
    commands.add_parser("gen", help="Generate a dataset directory")

    mitigate = commands.add_parser("mitigate", help="Apply a mitigation to a dataset")
    mitigate.add_argument("dataset", type=Path, help="Source dataset directory")
    mitigate.add_argument("--kind", choices=MITIGATION_KINDS, required=True)
    mitigate.add_argument("--factor", type=int, default=1, help="Decimation factor")
    mitigate.add_argument("--cutoff", type=float, help="Cutoff in Hz")
    mitigate.add_argument("--order", type=int, default=5, help="Butterworth order")
    mitigate.add_argument("--target-rate", type=float, help="Delivered rate in Hz (antialias)")
    mitigate.add_argument("--oversample", type=int, help="Oversampling factor (antialias)")
    mitigate.add_argument(
        "--notch-centers", type=float, nargs="*", help="Notch centers in Hz (default: auto)"
    )
    mitigate.add_argument("--notch-width", type=float, default=6.0, help="Notch width in Hz")

    train_eval = commands.add_parser("train-eval", help="Select axes, train and evaluate")
    train_eval.add_argument("dataset", type=Path, help="Dataset directory")

    sweep = commands.add_parser("sweep", help="Run the configured mitigation grid")
    sweep.add_argument(
        "--fixed-model",
        action="store_true",
        help="Train once on unmitigated data instead of retraining per cell",
    )

    plan = commands.add_parser("plan", help="Count attenuable aliases per candidate rate")
    plan.add_argument("--cutoff", type=float, required=True, help="Cutoff f_c in Hz")
    plan.add_argument("--candidates", type=float, nargs="+", required=True)
    plan.add_argument(
        "--freqs", type=float, nargs="+", default=list(DTMF_FREQUENCIES),
        help="Sensitive frequencies (default: the 8 DTMF frequencies)",
    )
    return parser


def resolve_config(args: argparse.Namespace) -> ExperimentConfig:
    """Load the configuration file (if any) and apply CLI overrides."""
    config = load_experiment_config(args.config) if args.config else ExperimentConfig()
    try:
        if args.seed is not None:
            config = replace(
                config,
                model=replace(config.model, seed=args.seed),
                dataset=replace(config.dataset, master_seed=args.seed),
                classifier=replace(config.classifier, rng_seed=args.seed),
            )
        if args.out is not None:
            config = replace(config, output_dir=str(args.out))
        if args.jobs is not None:
            config = replace(config, jobs=args.jobs)
        if getattr(args, "fixed_model", False):
            config = replace(config, fixed_model=True)
    except (ToneLeakError, ValueError) as e:
        raise ConfigError(f"Invalid command-line override: {e}") from e
    return config


def _mitigation_from_args(args: argparse.Namespace) -> MitigationConfig:
    return MitigationConfig(
        kind=args.kind,
        factor=args.factor,
        cutoff=args.cutoff,
        order=args.order,
        target_rate=args.target_rate,
        oversample=args.oversample,
        notch_centers=tuple(args.notch_centers) if args.notch_centers else None,
        notch_width=args.notch_width,
    )


def run(args: argparse.Namespace) -> None:
    config = resolve_config(args)
    controller = ExperimentController(config)
    out_dir = Path(config.output_dir)

    if args.command == "gen":
        path = controller.cmd_gen(out_dir)
        print(f"dataset written to {path}")
    elif args.command == "mitigate":
        path = controller.cmd_mitigate(args.dataset, _mitigation_from_args(args), out_dir)
        print(f"mitigated dataset written to {path}")
    elif args.command == "train-eval":
        result = controller.cmd_train_eval(args.dataset, out_dir)
        print(
            f"accuracy {result.report.accuracy:.4f} "
            f"axes {'+'.join(result.selection.axes)}"
        )
    elif args.command == "sweep":
        sweep = controller.cmd_sweep(out_dir)
        for row in sweep.rows:
            print(f"{row.mitigation:<40} {row.bandwidth_hz:>8.1f} Hz  {row.accuracy:.4f}")
    elif args.command == "plan":
        plan = controller.cmd_plan(args.cutoff, args.candidates, args.freqs, out_dir)
        for rate, count in plan.table:
            print(f"{rate:>10g} Hz  {count}")
        print(f"best rate {plan.best_rate}")


def main(argv: Sequence[str] | None = None) -> int:
    """Run the toneleak CLI.

    Returns:
        Exit code (0 for success, 2 for configuration errors, 3 for data errors).
    """
    args = build_parser().parse_args(argv)
    if args.log_level:
        logging.getLogger().setLevel(args.log_level)

    logger.debug("Running command %s", args.command)
    try:
        run(args)
    except (ConfigError, InvalidArgumentError) as e:
        logger.error("Invalid configuration: %s", e)
        return EXIT_CONFIG
    except ToneLeakError as e:
        logger.error("Data error: %s", e)
        return EXIT_DATA
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
