"""Exceptions raised by the heatmap sampling library."""

from __future__ import annotations

from pathlib import Path
from typing import Optional


class HeatmapError(Exception):
    """Base exception for heatmap sampling errors."""

    pass


class OutOfBoundsError(HeatmapError):
    """Raised when a metric point falls outside a grid."""

    pass


class DegenerateInputError(HeatmapError):
    """Raised when an input carries no usable mass or points."""

    pass


class DomainError(HeatmapError):
    """Raised when a value lies outside the domain of a function."""

    pass


class ShapeMismatchError(HeatmapError):
    """Raised when grids or trajectories that must agree in shape do not."""

    pass


class SizeBoundError(HeatmapError):
    """Raised when an exhaustive search would exceed its size bound."""

    pass


class GridFormatError(HeatmapError):
    """Raised when a grid file cannot be parsed."""

    pass


class ConfigError(HeatmapError, ValueError):
    """Raised when a configuration value is invalid."""

    pass


class SchemaError(HeatmapError):
    """Raised when a CSV or JSON input violates its schema."""

    def __init__(self, message: str, path: Optional[Path] = None, row: Optional[int] = None):
        """Initialize with the offending location.

        Args:
            message: Description of the violation.
            path: File the violation was found in.
            row: 1-based line number (header is row 1), if the violation is row-specific.
        """
        self.path = path
        self.row = row
        location = ""
        if path is not None:
            location = f"{path}"
            if row is not None:
                location += f", row {row}"
            location += ": "
        super().__init__(f"{location}{message}")
