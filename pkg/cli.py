"""
Command-Line Interface
argparse entry point for the spatial modelling pipeline; exit status follows the error type
"""

import argparse
import logging
import sys

from errors import SpatialEngineError
from pipeline import STAGES, run_pipeline, run_sweep, run_threshold_sweep, run_until
from run_config import load_config, validate_config

logger = logging.getLogger(__name__)

COMMANDS = {
    "validate": "check the configuration and every referenced path",
    "fuse": "crosswalk, aggregate and assemble the model frame",
    "weights": "build the queen contiguity weights",
    "fit": "fit OLS, Spatial Lag, Spatial Error and GWR",
    "diagnose": "Moran's I of every model's residuals",
    "cv": "k-fold cross-validated MAE",
    "sweep-radius": "refit with station counts at each radius",
    "sweep-threshold": "matched ZCTAs across crosswalk thresholds",
    "report": "full pipeline with the comparison report",
    "all": "full pipeline plus both sweeps",
}


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, help="path to the JSON run configuration")
    common.add_argument("--output", help="output directory (overrides output_dir)")
    common.add_argument("--seed", type=int, help="seed for CV folds and permutations (overrides both)")
    common.add_argument("--threads", type=int, help="worker threads for GWR, 0 = auto")
    common.add_argument("--format", choices=("text", "json", "both"), default="both", help="report format")
    common.add_argument(
        "--log-level", default="INFO", choices=("DEBUG", "INFO", "WARNING", "ERROR"), help="logging verbosity"
    )

    parser = argparse.ArgumentParser(
        prog="spatial-ev",
        description="Spatial regression comparison (OLS, Spatial Lag, Spatial Error, GWR) over ZCTA data",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in COMMANDS.items():
        sub.add_parser(name, parents=[common], help=help_text)
    return parser


def dispatch(command, config, fmt):
    if command == "validate":
        validate_config(config, need_stations=bool(config.stations))
        print(f"Configuration OK (hash {config.config_hash})")
    elif command in STAGES[:-1]:
        run_until(config, command, fmt)
    elif command == "report":
        run_pipeline(config, fmt)
    elif command == "sweep-radius":
        run_sweep(config)
    elif command == "sweep-threshold":
        run_threshold_sweep(config)
    elif command == "all":
        run_pipeline(config, fmt)
        if config.stations and config.station_column:
            run_sweep(config)
        if config.crosswalk:
            run_threshold_sweep(config)


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=getattr(logging, args.log_level), format="%(levelname)s %(name)s: %(message)s")
    try:
        config = load_config(args.config, seed=args.seed, output=args.output, threads=args.threads)
        dispatch(args.command, config, args.format)
    except SpatialEngineError as e:
        logger.error(f"❌ {e}")
        return e.exit_code
    except Exception as e:
        logger.exception(f"❌ Unexpected failure: {e}")
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
