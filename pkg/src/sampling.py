"""Extract K endpoint modalities from a probability heatmap.

Two optimizing samplers and two baselines share one interface:

- ``sample_mr``: greedy coverage of the heatmap by disks of ``mr_radius``,
  zeroing each covered disk before the next pick (minimizes expected miss rate).
- ``sample_fde``: iterative inverse-distance-weighted centroids started from
  the greedy picks (trades miss rate for final displacement error).
- ``sample_nms``: pixel ranking with non-maximum suppression.
- ``sample_kmeans``: probability-weighted Lloyd iterations.

Every sampler first refines the heatmap with ``upsample_bilinear`` by
``upsample_factor``. Argmax ties go to the pixel with the larger own value,
then to the lowest row-major index.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, replace
from typing import Iterator, Optional, Sequence, Tuple

import numpy as np
from scipy import ndimage
from scipy.spatial.distance import cdist

from .errors import ConfigError, DegenerateInputError, ShapeMismatchError
from .grid import Point, ProbabilityGrid, total_mass, upsample_bilinear

logger = logging.getLogger(__name__)

DEFAULT_K = 6
DEFAULT_MR_RADIUS = 1.8
DEFAULT_UPSAMPLE = 2
DEFAULT_FDE_ITERS = 0
DEFAULT_FDE_NEIGHBORHOOD = 3.0
DEFAULT_MISS_THRESHOLD = 2.0

# Lloyd iterations stop here even without assignment convergence
KMEANS_MAX_ITERS = 50

SAMPLER_MODES = ("mr", "fde", "nms", "kmeans")


@dataclass(frozen=True)
class CircleKernel:
    """Pixel offsets whose centers lie within a metric radius of the origin."""

    radius: float
    resolution: float
    offsets: Tuple[Tuple[int, int], ...]

    @property
    def radius_px(self) -> float:
        """Radius in pixels."""
        return self.radius / self.resolution

    @property
    def half_size(self) -> int:
        """Largest absolute offset along either axis."""
        return max(max(abs(di), abs(dj)) for di, dj in self.offsets)

    @property
    def mask(self) -> np.ndarray:
        """Square boolean footprint centered on offset (0, 0)."""
        half = self.half_size
        mask = np.zeros((2 * half + 1, 2 * half + 1), dtype=bool)
        for di, dj in self.offsets:
            mask[di + half, dj + half] = True
        return mask

    def __len__(self) -> int:
        return len(self.offsets)


@dataclass(frozen=True)
class SampleSet:
    """Ordered predicted endpoints with their probabilities."""

    points: Tuple[Point, ...]
    probabilities: Tuple[float, ...]
    covered_mass: Tuple[float, ...]

    def __post_init__(self):
        points = tuple((float(x), float(y)) for x, y in self.points)
        probabilities = tuple(float(p) for p in self.probabilities)
        covered = tuple(float(m) for m in self.covered_mass)
        if not points:
            raise DegenerateInputError("A sample set needs at least one point")
        if len(probabilities) != len(points) or len(covered) != len(points):
            raise ShapeMismatchError(
                f"Sample set has {len(points)} points, {len(probabilities)} probabilities "
                f"and {len(covered)} covered masses"
            )
        if any(p < 0 or p > 1 for p in probabilities):
            raise ConfigError("Sample probabilities must lie in [0, 1]")
        object.__setattr__(self, "points", points)
        object.__setattr__(self, "probabilities", probabilities)
        object.__setattr__(self, "covered_mass", covered)

    @classmethod
    def from_points(
        cls, points: Sequence[Point], covered_mass: Optional[Sequence[float]] = None
    ) -> "SampleSet":
        """Build a sample set with uniform probabilities."""
        k = len(points)
        return cls(
            points=tuple(points),
            probabilities=(1.0 / k,) * k if k else (),
            covered_mass=tuple(covered_mass) if covered_mass is not None else (0.0,) * k,
        )

    @property
    def k(self) -> int:
        """Number of predicted endpoints."""
        return len(self.points)

    def as_array(self) -> np.ndarray:
        """Endpoints as a (K, 2) array."""
        return np.array(self.points, dtype=np.float64).reshape(-1, 2)

    def with_probabilities(self, probabilities: Sequence[float]) -> "SampleSet":
        """Same endpoints with new probabilities."""
        return replace(self, probabilities=tuple(probabilities))


@dataclass(frozen=True)
class SamplerConfig:
    """Parameters shared by all samplers."""

    k: int = DEFAULT_K
    mr_radius: float = DEFAULT_MR_RADIUS
    upsample_factor: int = DEFAULT_UPSAMPLE
    fde_iters: int = DEFAULT_FDE_ITERS
    fde_neighborhood: float = DEFAULT_FDE_NEIGHBORHOOD
    miss_threshold: float = DEFAULT_MISS_THRESHOLD

    def __post_init__(self):
        if self.k < 1:
            raise ConfigError(f"K must be at least 1, got {self.k}")
        if self.fde_iters < 0:
            raise ConfigError(f"FDE iterations must be non-negative, got {self.fde_iters}")
        if self.upsample_factor < 1:
            raise ConfigError(f"Upsample factor must be at least 1, got {self.upsample_factor}")
        for name in ("mr_radius", "fde_neighborhood", "miss_threshold"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive, got {getattr(self, name)}")

    @classmethod
    def from_args(cls, args) -> "SamplerConfig":
        """Build a config from parsed command-line arguments.

        Args:
            args: Namespace carrying k, mr_radius, upsample, fde_iters,
                  fde_neighborhood and miss_threshold.
        """
        return cls(
            k=args.k,
            mr_radius=args.mr_radius,
            upsample_factor=args.upsample,
            fde_iters=args.fde_iters,
            fde_neighborhood=args.fde_neighborhood,
            miss_threshold=args.miss_threshold,
        )


def circle_kernel(radius: float, resolution: float) -> CircleKernel:
    """Discretize a disk into the pixel offsets whose centers it contains.

    Args:
        radius: Disk radius in meters.
        resolution: Meters per pixel.

    Returns:
        Kernel holding every integer (di, dj) with di^2 + dj^2 <= (radius/resolution)^2.
    """
    if radius <= 0 or resolution <= 0:
        raise ConfigError(f"Kernel radius and resolution must be positive, got {radius}, {resolution}")
    radius_px = radius / resolution
    half = int(np.floor(radius_px))
    span = np.arange(-half, half + 1)
    di, dj = np.meshgrid(span, span, indexing="ij")
    inside = di**2 + dj**2 <= radius_px**2
    offsets = tuple((int(a), int(b)) for a, b in zip(di[inside], dj[inside]))
    return CircleKernel(radius=float(radius), resolution=float(resolution), offsets=offsets)


def _check_kernel(grid: ProbabilityGrid, kernel: CircleKernel) -> None:
    if not np.isclose(kernel.resolution, grid.spec.resolution, rtol=1e-12, atol=0.0):
        raise ShapeMismatchError(
            f"Kernel resolution {kernel.resolution} does not match grid resolution "
            f"{grid.spec.resolution}"
        )


def _coverage_values(values: np.ndarray, kernel: CircleKernel) -> np.ndarray:
    return ndimage.correlate(values, kernel.mask.astype(np.float64), mode="constant", cval=0.0)


def coverage_map(grid: ProbabilityGrid, kernel: CircleKernel) -> ProbabilityGrid:
    """Mass within the kernel disk around every pixel (zero outside the grid)."""
    _check_kernel(grid, kernel)
    coverage = np.maximum(_coverage_values(grid.values, kernel), 0.0)
    return ProbabilityGrid(grid.spec, coverage)


def circle_integral(grid: ProbabilityGrid, points: Sequence[Point], radius: float) -> np.ndarray:
    """Mass of the pixels whose centers lie within ``radius`` of each point.

    Unlike coverage_map, points need not sit on pixel centers.
    """
    if radius <= 0:
        raise ConfigError(f"Integration radius must be positive, got {radius}")
    xs, ys = grid.spec.pixel_centers()
    integrals = np.empty(len(points))
    for index, (px, py) in enumerate(points):
        inside = (xs - px) ** 2 + (ys - py) ** 2 <= radius**2
        integrals[index] = float(np.sum(grid.values[inside]))
    return integrals


def _argmax_tiebreak(scores: np.ndarray, own: np.ndarray) -> int:
    """Index of the best score; ties prefer larger own value, then lower index."""
    best = np.max(scores)
    candidates = np.flatnonzero(scores == best)
    return int(candidates[np.argmax(own[candidates])])


def _zero_disk(values: np.ndarray, row: int, col: int, kernel: CircleKernel) -> None:
    half = kernel.half_size
    mask = kernel.mask
    height, width = values.shape
    r0, r1 = max(row - half, 0), min(row + half + 1, height)
    c0, c1 = max(col - half, 0), min(col + half + 1, width)
    window = mask[r0 - (row - half):r1 - (row - half), c0 - (col - half):c1 - (col - half)]
    values[r0:r1, c0:c1][window] = 0.0


def _require_mass(grid: ProbabilityGrid) -> None:
    if total_mass(grid) <= 0:
        raise DegenerateInputError("Cannot sample a heatmap with zero mass")


def sample_mr(grid: ProbabilityGrid, cfg: SamplerConfig) -> SampleSet:
    """Greedy miss-rate sampling.

    Picks the pixel with the most mass inside its ``mr_radius`` disk, zeroes
    that disk, and repeats K times. Once the mass is exhausted the remaining
    picks fall back to tie-break order with zero gain.

    Args:
        grid: Heatmap with positive mass (need not be normalized).
        cfg: Sampler configuration.

    Returns:
        K picks; ``covered_mass`` holds the greedy gain of each pick in units
        of the input grid's mass.

    Raises:
        DegenerateInputError: If the grid has no mass.
    """
    _require_mass(grid)
    work = upsample_bilinear(grid, cfg.upsample_factor)
    kernel = circle_kernel(cfg.mr_radius, work.spec.resolution)
    values = np.array(work.values)
    own = work.values.ravel()
    # Refinement scales interior mass by factor^2 and border mass by less
    mass_scale = total_mass(work) / total_mass(grid)
    picked = np.zeros(values.size, dtype=bool)

    points = []
    gains = []
    for k in range(cfg.k):
        coverage = _coverage_values(values, kernel).ravel()
        coverage[picked] = -np.inf
        index = _argmax_tiebreak(coverage, own)
        gain = max(float(coverage[index]), 0.0)
        row, col = np.unravel_index(index, work.spec.shape)
        _zero_disk(values, int(row), int(col), kernel)
        picked[index] = True
        points.append(work.spec.center_of(int(row), int(col)))
        gains.append(gain / mass_scale)
        logger.debug(f"MR pick {k}: {points[-1]} covering {gains[-1]:.6f}")

    logger.info(f"MR sampling picked {cfg.k} points covering {sum(gains):.4f}")
    return SampleSet.from_points(points, covered_mass=gains)


def fde_update(
    points: np.ndarray,
    weights: np.ndarray,
    centroids: np.ndarray,
    neighborhood: float,
    min_distance: float,
) -> np.ndarray:
    """One simultaneous centroid update of FDE sampling.

    Each centroid moves to the average of the points within ``neighborhood``
    of it, weighted by ``p_i / d_ik * m_i / d_ik`` where ``m_i`` is the
    distance from point i to its closest centroid. Distances are clamped to
    ``min_distance`` in both factors. Centroids with an empty neighborhood
    stay where they are.

    Args:
        points: (N, 2) point coordinates.
        weights: (N,) non-negative point probabilities.
        centroids: (K, 2) current centroids.
        neighborhood: Inclusive neighborhood radius in meters.
        min_distance: Lower clamp applied to distances.

    Returns:
        (K, 2) updated centroids.
    """
    distances = cdist(points, centroids)
    inside = distances <= neighborhood
    clamped = np.maximum(distances, min_distance)
    closest = clamped.min(axis=1, keepdims=True)
    coefficients = np.where(inside, weights[:, None] / clamped * closest / clamped, 0.0)
    norms = coefficients.sum(axis=0)

    updated = np.array(centroids, dtype=np.float64)
    moving = norms > 0
    if not np.all(moving):
        logger.warning(f"{int(np.sum(~moving))} centroid(s) have an empty neighborhood")
    updated[moving] = (coefficients[:, moving].T @ points) / norms[moving, None]
    return updated


def iterate_fde(
    grid: ProbabilityGrid,
    init: SampleSet,
    cfg: SamplerConfig,
    max_iters: Optional[int] = None,
) -> Iterator[SampleSet]:
    """Yield the FDE sampling result after each outer iteration.

    Args:
        grid: Heatmap with positive mass.
        init: Starting centroids, usually the MR sampling result.
        cfg: Sampler configuration.
        max_iters: Number of iterations; defaults to ``cfg.fde_iters``.
    """
    if init.k != cfg.k:
        raise ShapeMismatchError(f"Initialization has {init.k} points, expected {cfg.k}")
    _require_mass(grid)
    work = upsample_bilinear(grid, cfg.upsample_factor)
    support = work.values > 0
    xs, ys = work.spec.pixel_centers()
    points = np.column_stack([xs[support], ys[support]])
    weights = work.values[support]
    min_distance = work.spec.resolution / 2

    centroids = init.as_array()
    iterations = cfg.fde_iters if max_iters is None else max_iters
    for iteration in range(iterations):
        centroids = fde_update(points, weights, centroids, cfg.fde_neighborhood, min_distance)
        logger.debug(f"FDE iteration {iteration + 1}: {centroids.tolist()}")
        yield SampleSet(
            points=tuple(map(tuple, centroids)),
            probabilities=init.probabilities,
            covered_mass=(0.0,) * init.k,
        )


def sample_fde(grid: ProbabilityGrid, init: SampleSet, cfg: SamplerConfig) -> SampleSet:
    """FDE sampling: ``cfg.fde_iters`` centroid updates starting from ``init``.

    With zero iterations the initialization is returned unchanged.
    """
    if cfg.fde_iters == 0:
        return init
    result = init
    for result in iterate_fde(grid, init, cfg):
        pass
    return result


def sample_nms(grid: ProbabilityGrid, cfg: SamplerConfig) -> SampleSet:
    """Pixel ranking with non-maximum suppression.

    Pixels are visited in decreasing value; a pixel within ``mr_radius`` of an
    accepted pick is skipped. If every pixel is suppressed before K picks,
    the remaining picks take the next unpicked pixels in ranking order.
    """
    _require_mass(grid)
    work = upsample_bilinear(grid, cfg.upsample_factor)
    flat = work.values.ravel()
    order = np.argsort(-flat, kind="stable")
    xs, ys = (axis.ravel() for axis in work.spec.pixel_centers())

    suppressed = np.zeros(flat.size, dtype=bool)
    picked = np.zeros(flat.size, dtype=bool)
    points = []
    for _ in range(cfg.k):
        available = ~suppressed[order]
        if not available.any():
            logger.warning("Every pixel is suppressed; continuing in ranking order")
            available = ~picked[order]
        index = int(order[np.argmax(available)])
        picked[index] = True
        px, py = xs[index], ys[index]
        suppressed |= (xs - px) ** 2 + (ys - py) ** 2 <= cfg.mr_radius**2
        points.append((float(px), float(py)))

    logger.info(f"NMS sampling picked {cfg.k} points")
    return SampleSet.from_points(points)


def sample_kmeans(
    grid: ProbabilityGrid, cfg: SamplerConfig, init: Optional[SampleSet] = None
) -> SampleSet:
    """Probability-weighted K-means (Lloyd) over the heatmap pixels.

    Args:
        grid: Heatmap with positive mass.
        cfg: Sampler configuration.
        init: Starting centroids; defaults to the MR sampling result.

    Raises:
        DegenerateInputError: If the grid has no mass or fewer than K nonzero pixels.
    """
    _require_mass(grid)
    nonzero = int(np.count_nonzero(grid.values > 0))
    if nonzero < cfg.k:
        raise DegenerateInputError(f"K-means needs at least {cfg.k} nonzero pixels, got {nonzero}")
    work = upsample_bilinear(grid, cfg.upsample_factor)
    support = work.values > 0
    if init is None:
        init = sample_mr(grid, cfg)
    if init.k != cfg.k:
        raise ShapeMismatchError(f"Initialization has {init.k} points, expected {cfg.k}")

    xs, ys = work.spec.pixel_centers()
    points = np.column_stack([xs[support], ys[support]])
    weights = work.values[support]
    centroids = init.as_array()

    assignment = None
    for iteration in range(KMEANS_MAX_ITERS):
        new_assignment = np.argmin(cdist(points, centroids, "sqeuclidean"), axis=1)
        if assignment is not None and np.array_equal(new_assignment, assignment):
            logger.debug(f"K-means converged after {iteration} iterations")
            break
        assignment = new_assignment
        cluster_mass = np.bincount(assignment, weights=weights, minlength=cfg.k)
        sum_x = np.bincount(assignment, weights=weights * points[:, 0], minlength=cfg.k)
        sum_y = np.bincount(assignment, weights=weights * points[:, 1], minlength=cfg.k)
        occupied = cluster_mass > 0
        centroids[occupied, 0] = sum_x[occupied] / cluster_mass[occupied]
        centroids[occupied, 1] = sum_y[occupied] / cluster_mass[occupied]
    else:
        logger.warning(f"K-means stopped after {KMEANS_MAX_ITERS} iterations without converging")

    return SampleSet.from_points([tuple(c) for c in centroids])


def sample(grid: ProbabilityGrid, cfg: SamplerConfig, mode: str) -> SampleSet:
    """Run the sampler named by ``mode`` (one of SAMPLER_MODES)."""
    if mode == "mr":
        return sample_mr(grid, cfg)
    if mode == "fde":
        return sample_fde(grid, sample_mr(grid, cfg), cfg)
    if mode == "nms":
        return sample_nms(grid, cfg)
    if mode == "kmeans":
        return sample_kmeans(grid, cfg)
    raise ConfigError(f"Unknown sampling mode {mode!r}; expected one of {SAMPLER_MODES}")
