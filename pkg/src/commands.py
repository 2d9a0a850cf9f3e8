"""Subcommand implementations behind the command-line entry point.

Each command reads its inputs, runs the library and writes a plot-ready
file (CSV, JSON or HGRD). Nothing written here depends on wall-clock time,
so identical inputs and seeds give byte-identical outputs.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import List, Optional, Tuple

from .errors import ConfigError
from .grid import GridSpec
from .grid_file import contact_sheet, read_grid, write_grids, write_pgm
from .metrics import assign_probabilities, evaluate_cases
from .oracle import GREEDY_BOUND, verify_instances
from .rasterizer import rasterize_scene
from .sampling import SamplerConfig, sample
from .scenario import DEFAULT_DRAWS, sweep_tradeoff
from .tables import (
    emit,
    endpoint_cases,
    format_metrics,
    format_samples,
    format_tradeoff,
    is_sample_table,
    read_mixture,
    read_prediction_cases,
    read_samples,
    read_scene,
)

logger = logging.getLogger(__name__)

VERIFY_COLUMNS = "seed,size,k,greedy,optimum,ratio,passed"


@dataclass(frozen=True)
class RunConfig:
    """Options shared by every subcommand."""

    subcommand: str
    inputs: Tuple[Path, ...] = ()
    output: Optional[Path] = None
    seed: int = 0
    draws: int = DEFAULT_DRAWS

    def __post_init__(self):
        if self.draws < 1:
            raise ConfigError(f"Number of draws must be at least 1, got {self.draws}")
        if self.output is not None:
            resolved = self.output.resolve()
            for path in self.inputs:
                if path.resolve() == resolved:
                    raise ConfigError(f"Output {self.output} would overwrite input {path}")


@dataclass
class CommandResult:
    """Result of a subcommand."""

    command: str
    success: bool
    outputs: List[Path] = field(default_factory=list)
    errors: List[str] = field(default_factory=list)
    started_at: datetime = field(default_factory=lambda: datetime.now(timezone.utc))
    finished_at: Optional[datetime] = None

    def finish(self, success: bool = True) -> "CommandResult":
        """Mark the command as done."""
        self.success = success
        self.finished_at = datetime.now(timezone.utc)
        return self

    @property
    def duration_seconds(self) -> float:
        """Get the duration of the command in seconds."""
        if self.finished_at is None:
            return 0.0
        return (self.finished_at - self.started_at).total_seconds()

    def __str__(self) -> str:
        status = "succeeded" if self.success else "failed"
        written = ", ".join(str(p) for p in self.outputs) or "stdout"
        return (
            f"{self.command} {status}: wrote {written}, {len(self.errors)} errors "
            f"in {self.duration_seconds:.1f}s"
        )


def cmd_sample(
    grid_path: Path, cfg: SamplerConfig, mode: str, out: Optional[Path] = None
) -> CommandResult:
    """Sample K endpoints from an HGRD heatmap and write them as CSV.

    Probabilities come from the heatmap mass around each endpoint.
    """
    result = CommandResult(command="sample", success=False)
    grid = read_grid(grid_path)
    logger.info(f"Loaded {grid.spec.width}x{grid.spec.height} grid from {grid_path}")
    samples = sample(grid, cfg, mode)
    samples = samples.with_probabilities(assign_probabilities(grid, samples.points))
    emit(out, format_samples(samples))
    if out is not None:
        result.outputs.append(out)
    return result.finish()


def cmd_sweep(
    mixture_path: Path,
    cfg: SamplerConfig,
    l_max: int,
    draws: int,
    seed: int,
    out: Optional[Path] = None,
    spec: Optional[GridSpec] = None,
) -> CommandResult:
    """Write the FDE/MR trade-off curve for L = 0..l_max as CSV."""
    if l_max < 0:
        raise ConfigError(f"--l-max must be non-negative, got {l_max}")
    result = CommandResult(command="sweep", success=False)
    mixture = read_mixture(mixture_path)
    curve = sweep_tradeoff(mixture, cfg, list(range(l_max + 1)), draws, seed, spec=spec)
    emit(out, format_tradeoff(curve))
    if out is not None:
        result.outputs.append(out)
    return result.finish()


def cmd_eval(
    pred_path: Path,
    gt_path: Path,
    threshold: float,
    out: Optional[Path] = None,
    k: Optional[int] = None,
) -> CommandResult:
    """Evaluate predictions against ground truth and write metrics as JSON.

    ``pred_path`` is either a trajectory table (case_id,k,t,x,y,prob) or a
    sample table from ``cmd_sample``; the latter is scored on endpoints
    against the final ground-truth step of every case.
    """
    result = CommandResult(command="eval", success=False)
    if is_sample_table(pred_path):
        logger.info(f"{pred_path} is a sample table; evaluating endpoints only")
        cases = endpoint_cases(read_samples(pred_path), gt_path)
    else:
        cases = read_prediction_cases(pred_path, gt_path)
    report = evaluate_cases(cases, threshold, k=k)
    emit(out, format_metrics(report))
    if out is not None:
        result.outputs.append(out)
    return result.finish()


def cmd_verify(
    size: int,
    k: int,
    seeds: int,
    cfg: Optional[SamplerConfig] = None,
    out: Optional[Path] = None,
) -> CommandResult:
    """Check greedy MR sampling against the exhaustive optimum on random grids.

    Writes one CSV row per instance; the result fails if any instance misses
    the greedy approximation bound.
    """
    result = CommandResult(command="verify", success=False)
    outcomes = verify_instances(size, k, seeds, cfg)
    lines = [VERIFY_COLUMNS]
    for outcome in outcomes:
        lines.append(
            f"{outcome.seed},{outcome.size},{outcome.k},{outcome.greedy!r},"
            f"{outcome.optimum!r},{outcome.ratio!r},{int(outcome.passed)}"
        )
        if not outcome.passed:
            result.errors.append(str(outcome))
    emit(out, "\n".join(lines) + "\n")
    if out is not None:
        result.outputs.append(out)

    passed = len(outcomes) - len(result.errors)
    logger.info(f"{passed}/{len(outcomes)} instances satisfy the {GREEDY_BOUND:.4f} bound")
    for error in result.errors:
        logger.error(f"Bound violated: {error}")
    return result.finish(success=not result.errors)


def cmd_raster(
    scene_path: Path,
    out: Path,
    pgm: Optional[Path] = None,
    spec: Optional[GridSpec] = None,
) -> CommandResult:
    """Rasterize a scene file into a 45-grid HGRD stack, optionally with a PGM contact sheet."""
    result = CommandResult(command="raster", success=False)
    stack = rasterize_scene(read_scene(scene_path), spec)
    write_grids(out, stack.as_grids())
    result.outputs.append(out)
    if pgm is not None:
        write_pgm(pgm, contact_sheet(list(stack.channels)))
        result.outputs.append(pgm)
    return result.finish()
