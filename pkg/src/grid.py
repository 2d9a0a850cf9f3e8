"""Probability grids over an agent-centered metric frame.

Pixel (row, col) has its center at metric coordinates
``(origin_x + col * resolution, origin_y + row * resolution)``. Pixel (0, 0)
is the top-left of the stored array, and coordinates map to pixels by nearest
center.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Iterable, Tuple

import numpy as np
from scipy import ndimage

from .errors import (
    ConfigError,
    DegenerateInputError,
    DomainError,
    OutOfBoundsError,
    ShapeMismatchError,
)

logger = logging.getLogger(__name__)

# Raster and heatmap defaults: 224 x 224 pixels at 0.5 m per pixel
DEFAULT_GRID_SIZE = 224
DEFAULT_RESOLUTION = 0.5

# Standard deviation of the Gaussian training target, in pixels
DEFAULT_SIGMA_PX = 4.0

# Predictions are clamped to [FOCAL_EPS, 1 - FOCAL_EPS] before taking logs
FOCAL_EPS = 1e-7

# Exponent of the penalty-reducing term (1 - Y)^beta
FOCAL_BETA = 4

Point = Tuple[float, float]


@dataclass(frozen=True)
class GridSpec:
    """Geometry of a grid: size in pixels, resolution and frame origin."""

    width: int
    height: int
    resolution: float
    origin: Point = (0.0, 0.0)

    def __post_init__(self):
        if int(self.width) != self.width or self.width <= 0:
            raise ConfigError(f"Grid width must be a positive integer, got {self.width}")
        if int(self.height) != self.height or self.height <= 0:
            raise ConfigError(f"Grid height must be a positive integer, got {self.height}")
        if not np.isfinite(self.resolution) or self.resolution <= 0:
            raise ConfigError(f"Grid resolution must be positive, got {self.resolution}")
        object.__setattr__(self, "width", int(self.width))
        object.__setattr__(self, "height", int(self.height))
        object.__setattr__(self, "resolution", float(self.resolution))
        object.__setattr__(self, "origin", (float(self.origin[0]), float(self.origin[1])))

    @classmethod
    def centered(
        cls,
        width: int = DEFAULT_GRID_SIZE,
        height: int = DEFAULT_GRID_SIZE,
        resolution: float = DEFAULT_RESOLUTION,
    ) -> "GridSpec":
        """Create a spec whose frame center sits at metric (0, 0).

        For even sizes the center falls between pixels, so pixel centers sit
        at half-pixel offsets from the agent.
        """
        origin = (-(width - 1) / 2 * resolution, -(height - 1) / 2 * resolution)
        return cls(width=width, height=height, resolution=resolution, origin=origin)

    @property
    def shape(self) -> Tuple[int, int]:
        """Array shape (rows, cols)."""
        return (self.height, self.width)

    @property
    def pixel_area(self) -> float:
        """Area covered by one pixel in square meters."""
        return self.resolution * self.resolution

    @property
    def bounds(self) -> Tuple[float, float, float, float]:
        """Metric extent (x_min, y_min, x_max, y_max) including pixel edges."""
        half = self.resolution / 2
        return (
            self.origin[0] - half,
            self.origin[1] - half,
            self.origin[0] + (self.width - 1) * self.resolution + half,
            self.origin[1] + (self.height - 1) * self.resolution + half,
        )

    def center_of(self, row: int, col: int) -> Point:
        """Metric coordinates of a pixel center."""
        return (
            self.origin[0] + col * self.resolution,
            self.origin[1] + row * self.resolution,
        )

    def pixel_of(self, point: Point) -> Tuple[int, int]:
        """Nearest pixel (row, col) to a metric point.

        Raises:
            OutOfBoundsError: If the point is outside the grid.
        """
        col = int(np.floor((point[0] - self.origin[0]) / self.resolution + 0.5))
        row = int(np.floor((point[1] - self.origin[1]) / self.resolution + 0.5))
        if not (0 <= row < self.height and 0 <= col < self.width):
            raise OutOfBoundsError(
                f"Point ({point[0]:.3f}, {point[1]:.3f}) is outside the grid {self.bounds}"
            )
        return row, col

    def contains(self, point: Point) -> bool:
        """Check whether a metric point maps to a pixel of this grid."""
        try:
            self.pixel_of(point)
        except OutOfBoundsError:
            return False
        return True

    def pixel_centers(self) -> Tuple[np.ndarray, np.ndarray]:
        """Metric x and y coordinates of every pixel center, shaped like the grid."""
        xs = self.origin[0] + np.arange(self.width) * self.resolution
        ys = self.origin[1] + np.arange(self.height) * self.resolution
        return np.meshgrid(xs, ys, indexing="xy")

    def translated(self, dx: float, dy: float) -> "GridSpec":
        """Same grid with its origin moved by (dx, dy)."""
        return GridSpec(
            width=self.width,
            height=self.height,
            resolution=self.resolution,
            origin=(self.origin[0] + dx, self.origin[1] + dy),
        )


def _frozen_values(spec: GridSpec, values: Iterable) -> np.ndarray:
    array = np.array(values, dtype=np.float64)
    if array.ndim == 1 and array.size == spec.width * spec.height:
        array = array.reshape(spec.shape)
    if array.shape != spec.shape:
        raise ShapeMismatchError(
            f"Values of shape {array.shape} do not match grid shape {spec.shape}"
        )
    array.setflags(write=False)
    return array


@dataclass(frozen=True, eq=False)
class ProbabilityGrid:
    """Non-negative scalar field over a grid (heatmap or distribution)."""

    spec: GridSpec
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        values = _frozen_values(self.spec, self.values)
        if not np.all(np.isfinite(values)):
            raise DomainError("Probability grid values must be finite")
        if np.any(values < 0):
            raise DomainError("Probability grid values must be non-negative")
        object.__setattr__(self, "values", values)

    @classmethod
    def zeros(cls, spec: GridSpec) -> "ProbabilityGrid":
        """All-zero grid."""
        return cls(spec, np.zeros(spec.shape))

    @classmethod
    def delta(cls, spec: GridSpec, point: Point, mass: float = 1.0) -> "ProbabilityGrid":
        """Grid with all its mass on the pixel nearest to a point."""
        values = np.zeros(spec.shape)
        values[spec.pixel_of(point)] = mass
        return cls(spec, values)

    def scaled(self, factor: float) -> "ProbabilityGrid":
        """Grid with every value multiplied by a positive factor."""
        return ProbabilityGrid(self.spec, self.values * factor)

    def translated(self, dx: float, dy: float) -> "ProbabilityGrid":
        """Same values in a frame whose origin moved by (dx, dy)."""
        return ProbabilityGrid(self.spec.translated(dx, dy), self.values)

    def value_at(self, point: Point) -> float:
        """Value of the pixel nearest to a metric point."""
        return float(self.values[self.spec.pixel_of(point)])

    def argmax_point(self) -> Point:
        """Center of the largest pixel; ties go to the lowest row-major index."""
        row, col = np.unravel_index(int(np.argmax(self.values)), self.spec.shape)
        return self.spec.center_of(int(row), int(col))


@dataclass(frozen=True, eq=False)
class TargetGrid:
    """Training target with values in [0, 1], peaking at the ground truth."""

    spec: GridSpec
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        values = _frozen_values(self.spec, self.values)
        if not np.all(np.isfinite(values)) or np.any(values < 0) or np.any(values > 1):
            raise DomainError("Target values must lie in [0, 1]")
        object.__setattr__(self, "values", values)


def render_gaussian_target(
    spec: GridSpec, gt: Point, sigma: float = DEFAULT_SIGMA_PX
) -> TargetGrid:
    """Render a Gaussian centered on the ground-truth pixel.

    Distances are measured in pixels between pixel centers, so the pixel
    containing the ground truth is exactly 1.

    Args:
        spec: Grid geometry.
        gt: Ground-truth endpoint in metric coordinates.
        sigma: Standard deviation in pixels.

    Returns:
        The rendered target.

    Raises:
        OutOfBoundsError: If the ground truth lies outside the grid.
    """
    if sigma <= 0:
        raise ConfigError(f"Gaussian sigma must be positive, got {sigma}")
    gt_row, gt_col = spec.pixel_of(gt)
    rows = np.arange(spec.height)[:, None] - gt_row
    cols = np.arange(spec.width)[None, :] - gt_col
    values = np.exp(-(rows**2 + cols**2) / (2.0 * sigma**2))
    return TargetGrid(spec, values)


def _check_focal_inputs(pred: ProbabilityGrid, target: TargetGrid) -> Tuple[np.ndarray, np.ndarray]:
    if pred.spec != target.spec:
        raise ShapeMismatchError("Prediction and target grids have different specs")
    y_hat = pred.values
    if np.any(y_hat <= 0) or np.any(y_hat >= 1):
        raise DomainError("Focal loss predictions must lie strictly inside (0, 1)")
    return np.clip(y_hat, FOCAL_EPS, 1 - FOCAL_EPS), target.values


def focal_loss_map(pred: ProbabilityGrid, target: TargetGrid) -> np.ndarray:
    """Per-pixel focal loss terms before averaging.

    Pixels where the target is exactly 1 use ``-(1 - Y^)^2 log(Y^)``; all other
    pixels use ``-(Y - Y^)^2 (1 - Y)^4 log(1 - Y^)``.
    """
    y_hat, y = _check_focal_inputs(pred, target)
    positive = y == 1.0
    error_sq = (y - y_hat) ** 2
    return np.where(
        positive,
        -error_sq * np.log(y_hat),
        -error_sq * (1.0 - y) ** FOCAL_BETA * np.log(1.0 - y_hat),
    )


def focal_loss(pred: ProbabilityGrid, target: TargetGrid) -> float:
    """Pixel-wise focal loss averaged over all pixels.

    Args:
        pred: Predicted heatmap with values strictly inside (0, 1).
        target: Gaussian target of the same spec.

    Returns:
        Non-negative loss value.

    Raises:
        DomainError: If a prediction is outside (0, 1).
        ShapeMismatchError: If the specs differ.
    """
    return float(np.mean(focal_loss_map(pred, target)))


def focal_loss_gradient(pred: ProbabilityGrid, target: TargetGrid) -> np.ndarray:
    """Analytic derivative of focal_loss with respect to each prediction."""
    y_hat, y = _check_focal_inputs(pred, target)
    count = y.size
    positive = y == 1.0
    one_minus = 1.0 - y_hat
    grad_positive = 2.0 * one_minus * np.log(y_hat) - one_minus**2 / y_hat
    diff = y - y_hat
    grad_negative = (1.0 - y) ** FOCAL_BETA * (
        2.0 * diff * np.log(one_minus) + diff**2 / one_minus
    )
    return np.where(positive, grad_positive, grad_negative) / count


def upsample_bilinear(grid: ProbabilityGrid, factor: int) -> ProbabilityGrid:
    """Refine a grid by an integer factor with bilinear interpolation.

    Every input pixel center stays an output pixel center, so the origin is
    unchanged and each axis grows from n to (n - 1) * factor + 1 pixels.

    Args:
        grid: Grid to refine.
        factor: Positive integer refinement factor.

    Returns:
        Grid at resolution ``grid.spec.resolution / factor``.
    """
    if int(factor) != factor or factor < 1:
        raise ConfigError(f"Upsample factor must be a positive integer, got {factor}")
    factor = int(factor)
    if factor == 1:
        return grid

    spec = grid.spec
    out_height = (spec.height - 1) * factor + 1
    out_width = (spec.width - 1) * factor + 1
    rows = np.arange(out_height) / factor
    cols = np.arange(out_width) / factor
    coords = np.meshgrid(rows, cols, indexing="ij")
    values = ndimage.map_coordinates(grid.values, coords, order=1, mode="nearest")
    # Linear interpolation cannot leave [min, max]; clip rounding noise below zero
    values = np.maximum(values, 0.0)

    out_spec = GridSpec(
        width=out_width,
        height=out_height,
        resolution=spec.resolution / factor,
        origin=spec.origin,
    )
    logger.debug(f"Upsampled {spec.shape} grid by {factor} to {out_spec.shape}")
    return ProbabilityGrid(out_spec, values)


def total_mass(grid: ProbabilityGrid) -> float:
    """Sum of all pixel values."""
    return float(np.sum(grid.values))


def normalize(grid: ProbabilityGrid) -> ProbabilityGrid:
    """Scale a grid so its values sum to 1.

    Raises:
        DegenerateInputError: If the grid has no mass.
    """
    mass = total_mass(grid)
    if mass <= 0:
        raise DegenerateInputError("Cannot normalize a grid with zero mass")
    return ProbabilityGrid(grid.spec, grid.values / mass)
