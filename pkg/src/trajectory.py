"""Build full trajectories that end exactly at sampled endpoints."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np

from .errors import ConfigError, DegenerateInputError, ShapeMismatchError
from .grid import Point

# Step length used when the history has a single timestamp
DEFAULT_STEP_SECONDS = 0.1


@dataclass(frozen=True)
class AgentHistory:
    """Past positions of an agent for t in [-H, 0]."""

    points: Tuple[Point, ...]
    timestamps: Tuple[float, ...]
    padding_mask: Tuple[bool, ...]

    def __post_init__(self):
        points = tuple((float(x), float(y)) for x, y in self.points)
        timestamps = tuple(float(t) for t in self.timestamps)
        mask = tuple(bool(m) for m in self.padding_mask)
        if not (len(points) == len(timestamps) == len(mask)):
            raise ShapeMismatchError(
                f"History has {len(points)} points, {len(timestamps)} timestamps "
                f"and {len(mask)} mask entries"
            )
        if any(b <= a for a, b in zip(timestamps, timestamps[1:])):
            raise ConfigError("History timestamps must be strictly increasing")
        object.__setattr__(self, "points", points)
        object.__setattr__(self, "timestamps", timestamps)
        object.__setattr__(self, "padding_mask", mask)

    @classmethod
    def from_points(
        cls, points: Sequence[Point], step: float = DEFAULT_STEP_SECONDS
    ) -> "AgentHistory":
        """Unpadded history sampled every ``step`` seconds, ending at t = 0."""
        count = len(points)
        timestamps = tuple((i - (count - 1)) * step for i in range(count))
        return cls(points=tuple(points), timestamps=timestamps, padding_mask=(False,) * count)

    @property
    def valid_indices(self) -> Tuple[int, ...]:
        """Indices of unpadded steps."""
        return tuple(i for i, padded in enumerate(self.padding_mask) if not padded)

    def step_seconds(self) -> float:
        """Median spacing of the timestamps."""
        if len(self.timestamps) < 2:
            return DEFAULT_STEP_SECONDS
        return float(np.median(np.diff(self.timestamps)))


@dataclass(frozen=True)
class Trajectory:
    """Future positions for steps 1..T."""

    points: Tuple[Point, ...]

    def __post_init__(self):
        object.__setattr__(self, "points", tuple((float(x), float(y)) for x, y in self.points))

    @property
    def horizon(self) -> int:
        """Number of future steps T."""
        return len(self.points)

    @property
    def endpoint(self) -> Point:
        """Final position."""
        return self.points[-1]

    def as_array(self) -> np.ndarray:
        """Positions as a (T, 2) array."""
        return np.array(self.points, dtype=np.float64).reshape(-1, 2)


def estimate_velocity(history: AgentHistory) -> np.ndarray:
    """Velocity in m/s from the last two unpadded points (zero with only one)."""
    valid = history.valid_indices
    if not valid:
        raise DegenerateInputError("History has no unpadded point")
    if len(valid) < 2:
        return np.zeros(2)
    prev, last = valid[-2], valid[-1]
    delta = np.subtract(history.points[last], history.points[prev])
    return delta / (history.timestamps[last] - history.timestamps[prev])


def build_trajectory(
    history: AgentHistory,
    endpoint: Point,
    horizon: int,
    step: Optional[float] = None,
) -> Trajectory:
    """Constant-acceleration trajectory from the agent's last state to an endpoint.

    The start is the last unpadded history point, the initial velocity comes
    from the last two unpadded points, and the acceleration is solved so the
    position at step T equals the endpoint.

    Args:
        history: Agent history with at least one unpadded point.
        endpoint: Target position at the horizon.
        horizon: Number of future steps T.
        step: Seconds per future step; defaults to the history spacing.

    Returns:
        Trajectory of T points whose last point is the endpoint.

    Raises:
        DegenerateInputError: If every history step is padded.
    """
    if horizon < 1:
        raise ConfigError(f"Horizon must be at least 1 step, got {horizon}")
    valid = history.valid_indices
    if not valid:
        raise DegenerateInputError("Cannot build a trajectory from an all-padded history")

    dt = history.step_seconds() if step is None else float(step)
    start = np.array(history.points[valid[-1]])
    velocity = estimate_velocity(history)
    goal = np.array(endpoint, dtype=np.float64)

    total_time = horizon * dt
    acceleration = 2.0 * (goal - start - velocity * total_time) / total_time**2
    times = np.arange(1, horizon + 1)[:, None] * dt
    positions = start + velocity * times + 0.5 * acceleration * times**2
    positions[-1] = goal
    return Trajectory(points=tuple(map(tuple, positions)))
