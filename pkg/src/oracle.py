"""Brute-force evaluators used to check the samplers against their objectives."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, replace
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy.spatial.distance import cdist

from .errors import ConfigError, SizeBoundError
from .grid import DEFAULT_RESOLUTION, GridSpec, Point, ProbabilityGrid, normalize
from .metrics import MetricsReport
from .sampling import (
    DEFAULT_MISS_THRESHOLD,
    CircleKernel,
    SampleSet,
    SamplerConfig,
    circle_kernel,
    sample_mr,
)
from .scenario import GaussianMixture, draw_ground_truths

logger = logging.getLogger(__name__)

# Exhaustive search limits
MAX_BRUTE_FORCE_SIZE = 24
MAX_BRUTE_FORCE_K = 3

# Approximation ratio guaranteed by greedy maximum coverage
GREEDY_BOUND = 1.0 - 1.0 / math.e


@dataclass(frozen=True)
class Objective:
    """An objective a sampler optimizes."""

    kind: str
    radius: Optional[float] = None

    def __post_init__(self):
        if self.kind not in ("coverage", "expected_fde"):
            raise ConfigError(f"Unknown objective kind {self.kind!r}")
        if self.kind == "coverage" and (self.radius is None or self.radius <= 0):
            raise ConfigError("Coverage objective needs a positive radius")

    def evaluate(self, grid: ProbabilityGrid, points: Sequence[Point]) -> float:
        """Value of the objective for a set of points."""
        if self.kind == "coverage":
            return objective_coverage(grid, points, self.radius)
        return objective_fde(grid, points)


@dataclass(frozen=True)
class VerifyOutcome:
    """Greedy-vs-exhaustive comparison on one random grid."""

    seed: int
    size: int
    k: int
    greedy: float
    optimum: float
    greedy_points: Tuple[Point, ...]
    optimal_points: Tuple[Point, ...]

    @property
    def ratio(self) -> float:
        """Greedy coverage over optimal coverage."""
        return self.greedy / self.optimum if self.optimum > 0 else 1.0

    @property
    def passed(self) -> bool:
        """Greedy meets the approximation bound (and the optimum itself for K=1)."""
        if self.k == 1 and self.greedy_points != self.optimal_points:
            return False
        return self.greedy >= GREEDY_BOUND * self.optimum - 1e-12

    def __str__(self) -> str:
        status = "ok" if self.passed else "FAILED"
        return (
            f"seed={self.seed} size={self.size} K={self.k} greedy={self.greedy:.6f} "
            f"optimum={self.optimum:.6f} ratio={self.ratio:.4f} {status}"
        )


def _nearest_distances(grid: ProbabilityGrid, points: Sequence[Point]) -> np.ndarray:
    xs, ys = grid.spec.pixel_centers()
    centers = np.column_stack([xs.ravel(), ys.ravel()])
    return cdist(centers, np.asarray(points, dtype=np.float64).reshape(-1, 2)).min(axis=1)


def objective_coverage(grid: ProbabilityGrid, points: Sequence[Point], radius: float) -> float:
    """Mass within ``radius`` of at least one point, each pixel counted once.

    On a normalized grid this equals one minus the expected miss rate.
    """
    covered = _nearest_distances(grid, points) <= radius
    return float(np.sum(grid.values.ravel()[covered]))


def objective_fde(grid: ProbabilityGrid, points: Sequence[Point]) -> float:
    """Expected distance from the mass to its nearest point."""
    return float(np.sum(grid.values.ravel() * _nearest_distances(grid, points)))


def coverage_sets(grid: ProbabilityGrid, kernel: CircleKernel) -> np.ndarray:
    """Boolean matrix whose entry [c, i] says pixel c's disk contains pixel i."""
    rows, cols = np.indices(grid.spec.shape)
    rows, cols = rows.ravel(), cols.ravel()
    d_sq = (rows[:, None] - rows[None, :]) ** 2 + (cols[:, None] - cols[None, :]) ** 2
    return d_sq <= kernel.radius_px**2


def _best_in_block(
    values: np.ndarray, own: np.ndarray, valid: np.ndarray
) -> Optional[Tuple[float, float, int]]:
    if not valid.any():
        return None
    best_value = np.max(values[valid])
    tied = valid & (values == best_value)
    best_own = np.max(own[tied])
    first = int(np.argmax((tied & (own == best_own)).ravel()))
    return float(best_value), float(best_own), first


def brute_force_coverage(grid: ProbabilityGrid, kernel: CircleKernel, k: int) -> SampleSet:
    """Exhaustively find the K pixels whose disks cover the most mass.

    Ties prefer the larger summed pixel value, then the lexicographically
    smallest pixel tuple, the same rule the greedy sampler uses for K=1.

    Args:
        grid: Grid of at most 24 x 24 pixels.
        kernel: Disk kernel at the grid resolution.
        k: Number of pixels, 1 to 3.

    Returns:
        Optimal pixels in increasing row-major order; ``covered_mass`` holds
        each pixel's marginal gain in that order.

    Raises:
        SizeBoundError: If the grid or K exceeds the exhaustive-search bound.
    """
    spec = grid.spec
    if spec.width > MAX_BRUTE_FORCE_SIZE or spec.height > MAX_BRUTE_FORCE_SIZE:
        raise SizeBoundError(
            f"Exhaustive search is limited to {MAX_BRUTE_FORCE_SIZE}x{MAX_BRUTE_FORCE_SIZE} grids"
        )
    if not 1 <= k <= MAX_BRUTE_FORCE_K:
        raise SizeBoundError(f"Exhaustive search is limited to K <= {MAX_BRUTE_FORCE_K}, got {k}")
    n = spec.width * spec.height
    if k > n:
        raise SizeBoundError(f"Cannot choose {k} pixels from a grid of {n}")

    p = grid.values.ravel()
    covers = coverage_sets(grid, kernel)
    weights = covers.astype(np.float64)
    single = weights @ p

    if k == 1:
        block = _best_in_block(single, p, np.ones(n, dtype=bool))
        chosen: Tuple[int, ...] = (block[2],)
    elif k == 2:
        overlap = (weights * p) @ weights.T
        values = single[:, None] + single[None, :] - overlap
        own = p[:, None] + p[None, :]
        block = _best_in_block(values, own, np.triu(np.ones((n, n), dtype=bool), 1))
        chosen = divmod(block[2], n)
    else:
        overlap = (weights * p) @ weights.T
        best: Optional[Tuple[float, float]] = None
        chosen = ()
        for a in range(n - 2):
            rest = slice(a + 1, n)
            m = n - a - 1
            support = np.flatnonzero(covers[a])
            triple = (weights[rest][:, support] * p[support]) @ weights[rest][:, support].T
            pair = overlap[rest, rest]
            values = (
                single[a]
                + single[rest][:, None]
                + single[rest][None, :]
                - overlap[a, rest][:, None]
                - overlap[a, rest][None, :]
                - pair
                + triple
            )
            own = p[a] + p[rest][:, None] + p[rest][None, :]
            block = _best_in_block(values, own, np.triu(np.ones((m, m), dtype=bool), 1))
            if block is None:
                continue
            if best is None or (block[0], block[1]) > best:
                best = (block[0], block[1])
                b, c = divmod(block[2], m)
                chosen = (a, a + 1 + b, a + 1 + c)

    chosen = tuple(int(i) for i in chosen)
    covered = np.zeros(n, dtype=bool)
    gains = []
    for index in chosen:
        fresh = covers[index] & ~covered
        gains.append(float(np.sum(p[fresh])))
        covered |= covers[index]
    points = [spec.center_of(*divmod(index, spec.width)) for index in chosen]
    logger.debug(f"Exhaustive optimum for K={k}: {points} covering {sum(gains):.6f}")
    return SampleSet.from_points(points, covered_mass=gains)


def monte_carlo_metrics(
    mixture: GaussianMixture,
    samples: SampleSet,
    draws: int,
    seed: int,
    threshold: float = DEFAULT_MISS_THRESHOLD,
) -> MetricsReport:
    """Expected endpoint metrics of a sample set under a mixture, by simulation.

    Ground truths are drawn from the mixture with a generator seeded by
    ``seed``, so the result is deterministic. Each draw is an endpoint-only
    case, so its ADE equals its FDE.
    """
    if draws < 1:
        raise ConfigError(f"Monte-Carlo draws must be at least 1, got {draws}")
    ground_truths = draw_ground_truths(mixture, draws, seed)
    distances = cdist(ground_truths, samples.as_array())
    best = np.argmin(distances, axis=1)
    nearest = distances[np.arange(draws), best]
    missed = nearest > threshold

    probs = np.array(samples.probabilities, dtype=np.float64)
    probs = probs / probs.sum() if probs.sum() > 0 else np.full(samples.k, 1.0 / samples.k)
    with np.errstate(divide="ignore"):
        penalty = -np.log(probs[best])
    p_fde = float(np.mean(nearest + penalty))

    def stderr(values: np.ndarray) -> float:
        return float(np.std(values, ddof=1) / math.sqrt(draws)) if draws > 1 else 0.0

    return MetricsReport(
        k=samples.k,
        mr_k=float(np.mean(missed)),
        min_fde_k=float(np.mean(nearest)),
        min_ade_k=float(np.mean(nearest)),
        p_min_fde_k=p_fde,
        p_min_ade_k=p_fde,
        missed=tuple(bool(m) for m in missed),
        mr_stderr=stderr(missed.astype(np.float64)),
        min_fde_stderr=stderr(nearest),
    )


def random_grid(size: int, seed: int, resolution: float = DEFAULT_RESOLUTION) -> ProbabilityGrid:
    """Normalized grid of uniform random values, centered on the origin."""
    rng = np.random.default_rng(seed)
    spec = GridSpec.centered(size, size, resolution)
    return normalize(ProbabilityGrid(spec, rng.random(spec.shape)))


def verify_instances(
    size: int, k: int, seeds: int, cfg: Optional[SamplerConfig] = None
) -> List[VerifyOutcome]:
    """Compare greedy MR sampling with the exhaustive optimum on random grids.

    Args:
        size: Grid side in pixels (at most 24).
        k: Number of picks (at most 3).
        seeds: Number of instances, seeded 0..seeds-1.
        cfg: Sampler configuration; its radius is used, upsampling is disabled.
    """
    cfg = replace(cfg or SamplerConfig(), k=k, upsample_factor=1)
    outcomes = []
    for seed in range(seeds):
        grid = random_grid(size, seed)
        kernel = circle_kernel(cfg.mr_radius, grid.spec.resolution)
        greedy = sample_mr(grid, cfg)
        optimal = brute_force_coverage(grid, kernel, k)
        outcome = VerifyOutcome(
            seed=seed,
            size=size,
            k=k,
            greedy=objective_coverage(grid, greedy.points, cfg.mr_radius),
            optimum=objective_coverage(grid, optimal.points, cfg.mr_radius),
            greedy_points=greedy.points,
            optimal_points=optimal.points,
        )
        logger.info(str(outcome))
        outcomes.append(outcome)
    return outcomes
