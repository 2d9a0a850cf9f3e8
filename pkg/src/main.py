"""Main entry point for heatmap endpoint sampling."""

from __future__ import annotations

import argparse
import logging
import logging.handlers
import sys
from pathlib import Path
from typing import List, Optional

from .commands import RunConfig, cmd_eval, cmd_raster, cmd_sample, cmd_sweep, cmd_verify
from .errors import HeatmapError
from .sampling import (
    DEFAULT_FDE_ITERS,
    DEFAULT_FDE_NEIGHBORHOOD,
    DEFAULT_K,
    DEFAULT_MISS_THRESHOLD,
    DEFAULT_MR_RADIUS,
    DEFAULT_UPSAMPLE,
    SAMPLER_MODES,
    SamplerConfig,
)
from .scenario import DEFAULT_DRAWS

logger = logging.getLogger(__name__)

# Exit codes
EXIT_OK = 0
EXIT_ERROR = 1
EXIT_VERIFY_FAILED = 3

DEFAULT_L_MAX = 7
DEFAULT_VERIFY_K = 1


def setup_logging(verbose: bool = False, log_file: Optional[Path] = None) -> None:
    """Configure logging for the command-line tool."""
    level = logging.DEBUG if verbose else logging.INFO
    format_str = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"

    handlers: List[logging.Handler] = []
    if log_file is not None:
        log_file.parent.mkdir(parents=True, exist_ok=True)
        # Rotate at 1 MB, keep 1 backup
        handlers.append(
            logging.handlers.RotatingFileHandler(log_file, maxBytes=1_000_000, backupCount=1)
        )
    # stdout may carry a CSV, so log lines go to stderr
    if log_file is None or sys.stderr.isatty():
        handlers.append(logging.StreamHandler(sys.stderr))

    logging.basicConfig(level=level, format=format_str, handlers=handlers)


def _add_sampler_arguments(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--k", type=int, default=DEFAULT_K, help="Number of endpoints")
    parser.add_argument(
        "--mr-radius",
        type=float,
        default=DEFAULT_MR_RADIUS,
        help="Disk radius of greedy MR sampling and NMS, in meters",
    )
    parser.add_argument(
        "--upsample", type=int, default=DEFAULT_UPSAMPLE, help="Bilinear refinement factor"
    )
    parser.add_argument(
        "--fde-iters", type=int, default=DEFAULT_FDE_ITERS, help="FDE sampling iterations (L)"
    )
    parser.add_argument(
        "--fde-neighborhood",
        type=float,
        default=DEFAULT_FDE_NEIGHBORHOOD,
        help="Neighborhood radius of FDE centroid updates, in meters",
    )
    parser.add_argument(
        "--miss-threshold",
        type=float,
        default=DEFAULT_MISS_THRESHOLD,
        help="Miss distance in meters",
    )


def build_parser() -> argparse.ArgumentParser:
    """Create the argument parser with every subcommand."""
    parser = argparse.ArgumentParser(
        prog="heatmap-endpoints",
        description="Heatmap Endpoints - Sample and evaluate multimodal endpoint predictions",
    )
    parser.add_argument("--verbose", "-v", action="store_true", help="Enable verbose logging")
    parser.add_argument("--log-file", type=Path, help="Also log to this rotating file")
    subparsers = parser.add_subparsers(dest="command", required=True)

    sample_parser = subparsers.add_parser("sample", help="Sample endpoints from an HGRD heatmap")
    sample_parser.add_argument("grid", type=Path, help="HGRD heatmap file")
    sample_parser.add_argument("--mode", choices=SAMPLER_MODES, default="mr", help="Sampler")
    _add_sampler_arguments(sample_parser)
    sample_parser.add_argument("--out", type=Path, help="Output CSV (stdout when omitted)")

    sweep_parser = subparsers.add_parser("sweep", help="FDE/MR trade-off curve of a mixture")
    sweep_parser.add_argument("mixture", type=Path, help="Mixture JSON file")
    sweep_parser.add_argument(
        "--l-max", type=int, default=DEFAULT_L_MAX, help="Largest number of FDE iterations"
    )
    sweep_parser.add_argument("--draws", type=int, default=DEFAULT_DRAWS, help="Monte-Carlo draws")
    sweep_parser.add_argument("--seed", type=int, default=0, help="Seed of the ground-truth draws")
    _add_sampler_arguments(sweep_parser)
    sweep_parser.add_argument("--out", type=Path, help="Output CSV (stdout when omitted)")

    eval_parser = subparsers.add_parser("eval", help="Evaluate predictions against ground truth")
    eval_parser.add_argument("pred", type=Path, help="Prediction or sample CSV")
    eval_parser.add_argument("gt", type=Path, help="Ground-truth CSV")
    eval_parser.add_argument(
        "--miss-threshold", type=float, default=DEFAULT_MISS_THRESHOLD, help="Miss distance in meters"
    )
    eval_parser.add_argument("--k", type=int, help="Keep only the k most probable predictions")
    eval_parser.add_argument("--out", type=Path, help="Output JSON (stdout when omitted)")

    verify_parser = subparsers.add_parser(
        "verify", help="Check greedy MR sampling against the exhaustive optimum"
    )
    verify_parser.add_argument("size", type=int, help="Grid side in pixels (at most 24)")
    verify_parser.add_argument(
        "k", type=int, nargs="?", default=DEFAULT_VERIFY_K, help="Number of picks (at most 3)"
    )
    verify_parser.add_argument("seeds", type=int, nargs="?", default=10, help="Number of random grids")
    verify_parser.add_argument(
        "--mr-radius", type=float, default=DEFAULT_MR_RADIUS, help="Disk radius in meters"
    )
    verify_parser.add_argument("--out", type=Path, help="Output CSV (stdout when omitted)")

    raster_parser = subparsers.add_parser("raster", help="Rasterize a scene into 45 channels")
    raster_parser.add_argument("scene", type=Path, help="Scene JSON file")
    raster_parser.add_argument("--out", type=Path, required=True, help="Output HGRD stack")
    raster_parser.add_argument("--pgm", type=Path, help="Also write a PGM contact sheet")

    return parser


def run(args: argparse.Namespace) -> int:
    """Dispatch parsed arguments to their subcommand.

    Returns:
        Exit code of the subcommand.
    """
    if args.command == "sample":
        run_config = RunConfig("sample", inputs=(args.grid,), output=args.out)
        result = cmd_sample(args.grid, SamplerConfig.from_args(args), args.mode, run_config.output)
    elif args.command == "sweep":
        run_config = RunConfig(
            "sweep", inputs=(args.mixture,), output=args.out, seed=args.seed, draws=args.draws
        )
        result = cmd_sweep(
            args.mixture,
            SamplerConfig.from_args(args),
            args.l_max,
            run_config.draws,
            run_config.seed,
            run_config.output,
        )
    elif args.command == "eval":
        run_config = RunConfig("eval", inputs=(args.pred, args.gt), output=args.out)
        result = cmd_eval(args.pred, args.gt, args.miss_threshold, run_config.output, k=args.k)
    elif args.command == "verify":
        result = cmd_verify(
            args.size, args.k, args.seeds, SamplerConfig(mr_radius=args.mr_radius), args.out
        )
        logger.info(str(result))
        return EXIT_OK if result.success else EXIT_VERIFY_FAILED
    else:
        run_config = RunConfig("raster", inputs=(args.scene,), output=args.out)
        result = cmd_raster(args.scene, run_config.output, args.pgm)

    logger.info(str(result))
    return EXIT_OK if result.success else EXIT_ERROR


def main(argv: Optional[List[str]] = None) -> int:
    """Main entry point.

    Returns:
        Exit code (0 for success, 1 for errors, 2 for usage errors,
        3 when verify finds a bound violation).
    """
    parser = build_parser()
    args = parser.parse_args(argv)

    setup_logging(verbose=args.verbose, log_file=args.log_file)

    try:
        return run(args)
    except (HeatmapError, FileNotFoundError) as e:
        logger.error(f"{args.command} failed: {e}")
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
