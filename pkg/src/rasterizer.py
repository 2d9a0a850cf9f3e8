"""Render a vector scene into the 45-channel agent-centered raster stack.

Channel layout:

    0        drivable area (filled polygons)
    1        lane boundaries (1 px polylines)
    2-4      centerline heading, HSV hue encoded as RGB
    5-24     target agent footprint, one channel per history step (oldest first)
    25-44    union of every neighbor footprint, one channel per history step
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from skimage.color import hsv2rgb
from skimage.draw import line, polygon

from .errors import ConfigError, DomainError, ShapeMismatchError
from .grid import GridSpec, Point, ProbabilityGrid
from .trajectory import AgentHistory

logger = logging.getLogger(__name__)

HISTORY_STEPS = 20
NUM_CHANNELS = 5 + 2 * HISTORY_STEPS

DRIVABLE_CHANNEL = 0
BOUNDARY_CHANNEL = 1
HEADING_CHANNELS = slice(2, 5)
TARGET_CHANNELS = slice(5, 5 + HISTORY_STEPS)
NEIGHBOR_CHANNELS = slice(5 + HISTORY_STEPS, NUM_CHANNELS)

CHANNEL_NAMES: Tuple[str, ...] = (
    ("drivable", "boundaries", "centerline_r", "centerline_g", "centerline_b")
    + tuple(f"target_{t}" for t in range(1 - HISTORY_STEPS, 1))
    + tuple(f"neighbors_{t}" for t in range(1 - HISTORY_STEPS, 1))
)

# Displacements below this are treated as standing still (meters)
STATIONARY_EPS = 1e-6

Polygon = Tuple[Point, ...]
Polyline = Tuple[Point, ...]


def _as_points(points: Sequence[Point]) -> Tuple[Point, ...]:
    result = tuple((float(x), float(y)) for x, y in points)
    if not all(math.isfinite(v) for p in result for v in p):
        raise ConfigError("Scene geometry must be finite")
    return result


@dataclass(frozen=True)
class Centerline:
    """Directed lane centerline with a heading per vertex."""

    points: Polyline
    headings: Tuple[float, ...]

    def __post_init__(self):
        points = _as_points(self.points)
        headings = tuple(float(h) for h in self.headings)
        if len(headings) != len(points):
            raise ShapeMismatchError(
                f"Centerline has {len(points)} vertices but {len(headings)} headings"
            )
        if any(not 0.0 <= h < 2 * math.pi for h in headings):
            raise ConfigError("Centerline headings must lie in [0, 2*pi)")
        object.__setattr__(self, "points", points)
        object.__setattr__(self, "headings", headings)


@dataclass(frozen=True)
class AgentTrack:
    """An agent's history with its footprint rectangle.

    Headings default to the direction of motion; a stationary step keeps the
    previous heading and a fully stationary agent faces +x.
    """

    history: AgentHistory
    length: float
    width: float
    headings: Optional[Tuple[float, ...]] = None

    def __post_init__(self):
        if self.length <= 0 or self.width <= 0:
            raise ConfigError(f"Footprint must be positive, got {self.length} x {self.width}")
        if self.headings is not None:
            headings = tuple(float(h) for h in self.headings)
            if len(headings) != len(self.history.points):
                raise ShapeMismatchError(
                    f"Track has {len(self.history.points)} steps but {len(headings)} headings"
                )
            object.__setattr__(self, "headings", headings)

    def step_headings(self) -> Tuple[float, ...]:
        """Heading of every history step (padded steps included)."""
        if self.headings is not None:
            return self.headings
        points = self.history.points
        valid = self.history.valid_indices
        motion: Dict[int, Optional[float]] = {}
        current: Optional[float] = None
        for prev, index in zip(valid, valid[1:]):
            dx = points[index][0] - points[prev][0]
            dy = points[index][1] - points[prev][1]
            if math.hypot(dx, dy) > STATIONARY_EPS:
                current = math.atan2(dy, dx)
            motion[index] = current
        first = next((h for h in motion.values() if h is not None), 0.0)
        headings = [first] * len(points)
        for index, heading in motion.items():
            headings[index] = first if heading is None else heading
        return tuple(headings)

    def footprint(self, center: Point, heading: float) -> Polygon:
        """Corners of the footprint rectangle at a position and heading."""
        cos_h, sin_h = math.cos(heading), math.sin(heading)
        half_l, half_w = self.length / 2, self.width / 2
        corners = ((half_l, half_w), (-half_l, half_w), (-half_l, -half_w), (half_l, -half_w))
        return tuple(
            (center[0] + cos_h * u - sin_h * v, center[1] + sin_h * u + cos_h * v)
            for u, v in corners
        )


@dataclass(frozen=True)
class Scene:
    """Vector description of the map and agents around the target."""

    drivable: Tuple[Polygon, ...] = ()
    boundaries: Tuple[Polyline, ...] = ()
    centerlines: Tuple[Centerline, ...] = ()
    target: Optional[AgentTrack] = None
    neighbors: Tuple[AgentTrack, ...] = ()

    def __post_init__(self):
        drivable = tuple(_as_points(p) for p in self.drivable)
        for index, ring in enumerate(drivable):
            if len(ring) < 4 or ring[0] != ring[-1]:
                raise ConfigError(f"Drivable polygon {index} is not closed")
        object.__setattr__(self, "drivable", drivable)
        object.__setattr__(self, "boundaries", tuple(_as_points(b) for b in self.boundaries))
        object.__setattr__(self, "centerlines", tuple(self.centerlines))
        object.__setattr__(self, "neighbors", tuple(self.neighbors))


@dataclass(frozen=True, eq=False)
class RasterStack:
    """Channels of a rasterized scene, shaped (45, height, width)."""

    spec: GridSpec
    channels: np.ndarray = field(repr=False)

    def __post_init__(self):
        channels = np.array(self.channels, dtype=np.float64)
        if channels.shape != (NUM_CHANNELS,) + self.spec.shape:
            raise ShapeMismatchError(
                f"Raster stack has shape {channels.shape}, expected "
                f"{(NUM_CHANNELS,) + self.spec.shape}"
            )
        channels.setflags(write=False)
        object.__setattr__(self, "channels", channels)

    def channel(self, key: Union[int, str]) -> np.ndarray:
        """One channel by index or by name from CHANNEL_NAMES."""
        index = CHANNEL_NAMES.index(key) if isinstance(key, str) else key
        return self.channels[index]

    def as_grids(self) -> List[ProbabilityGrid]:
        """Channels as grids, in channel order."""
        return [ProbabilityGrid(self.spec, channel) for channel in self.channels]


def _heading_colors(thetas: np.ndarray) -> np.ndarray:
    hue = np.mod(thetas, 2 * np.pi) / (2 * np.pi)
    hsv = np.stack([hue, np.ones_like(hue), np.ones_like(hue)], axis=-1)
    return hsv2rgb(hsv.reshape(-1, 1, 3)).reshape(-1, 3)


def hsv_heading_encode(theta: float) -> Tuple[float, float, float]:
    """Encode a heading as RGB: hue = theta / 2pi, full saturation and value.

    Raises:
        DomainError: If theta is not finite.
    """
    if not math.isfinite(theta):
        raise DomainError(f"Heading must be finite, got {theta}")
    r, g, b = _heading_colors(np.array([theta], dtype=np.float64))[0]
    return (float(r), float(g), float(b))


def _to_pixels(spec: GridSpec, points: Sequence[Point]) -> Tuple[np.ndarray, np.ndarray]:
    """Fractional (row, col) coordinates of metric points."""
    array = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    rows = (array[:, 1] - spec.origin[1]) / spec.resolution
    cols = (array[:, 0] - spec.origin[0]) / spec.resolution
    return rows, cols


def _fill_polygon(target: np.ndarray, spec: GridSpec, ring: Sequence[Point]) -> None:
    rows, cols = _to_pixels(spec, ring)
    rr, cc = polygon(rows, cols, shape=spec.shape)
    target[rr, cc] = 1.0


def _segment_pixels(spec: GridSpec, start: Point, end: Point) -> Tuple[np.ndarray, np.ndarray]:
    rows, cols = _to_pixels(spec, (start, end))
    r = np.floor(rows + 0.5).astype(int)
    c = np.floor(cols + 0.5).astype(int)
    rr, cc = line(r[0], c[0], r[1], c[1])
    inside = (rr >= 0) & (rr < spec.height) & (cc >= 0) & (cc < spec.width)
    return rr[inside], cc[inside]


def _draw_track(target: np.ndarray, spec: GridSpec, track: AgentTrack) -> None:
    """Draw the last HISTORY_STEPS footprints into a (HISTORY_STEPS, h, w) block."""
    points = track.history.points[-HISTORY_STEPS:]
    padded = track.history.padding_mask[-HISTORY_STEPS:]
    headings = track.step_headings()[-HISTORY_STEPS:]
    offset = HISTORY_STEPS - len(points)
    for step, (center, is_padded, heading) in enumerate(zip(points, padded, headings)):
        if is_padded:
            continue
        _fill_polygon(target[offset + step], spec, track.footprint(center, heading))


def rasterize_scene(scene: Scene, spec: Optional[GridSpec] = None) -> RasterStack:
    """Rasterize a scene into the 45-channel stack.

    Polygons fill the pixels whose centers fall inside, polylines are drawn
    1 px wide between the pixels nearest to their vertices, and histories
    are aligned so that the current step lands in the last channel of each
    block. Padded or missing steps stay empty.

    Args:
        scene: Scene in the frame's metric coordinates.
        spec: Frame geometry; defaults to the centered 224 x 224 frame at 0.5 m.

    Returns:
        Stack with binary occupancy channels and heading channels in [0, 1].
    """
    spec = spec if spec is not None else GridSpec.centered()
    channels = np.zeros((NUM_CHANNELS,) + spec.shape)

    for ring in scene.drivable:
        _fill_polygon(channels[DRIVABLE_CHANNEL], spec, ring)

    for boundary in scene.boundaries:
        for start, end in zip(boundary, boundary[1:]):
            rr, cc = _segment_pixels(spec, start, end)
            channels[BOUNDARY_CHANNEL, rr, cc] = 1.0

    heading_block = channels[HEADING_CHANNELS]
    for centerline in scene.centerlines:
        colors = _heading_colors(np.array(centerline.headings[:-1]))
        for (start, end), color in zip(zip(centerline.points, centerline.points[1:]), colors):
            rr, cc = _segment_pixels(spec, start, end)
            for band in range(3):
                heading_block[band, rr, cc] = np.maximum(heading_block[band, rr, cc], color[band])

    if scene.target is not None:
        _draw_track(channels[TARGET_CHANNELS], spec, scene.target)

    neighbor_block = channels[NEIGHBOR_CHANNELS]
    for neighbor in scene.neighbors:
        layer = np.zeros_like(neighbor_block)
        _draw_track(layer, spec, neighbor)
        np.maximum(neighbor_block, layer, out=neighbor_block)

    logger.info(
        f"Rasterized scene with {len(scene.drivable)} polygon(s), "
        f"{len(scene.boundaries) + len(scene.centerlines)} polyline(s) and "
        f"{len(scene.neighbors) + (scene.target is not None)} agent(s)"
    )
    return RasterStack(spec, channels)
