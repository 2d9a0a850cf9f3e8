"""Read and write grids as HGRD v1 files and export PGM previews.

An HGRD v1 block is one ASCII header line
``HGRD <width> <height> <resolution> <origin_x> <origin_y>\\n`` followed by
``width * height`` row-major little-endian float32 values. A file may hold
several blocks back to back (a raster stack is 45 of them).
"""

from __future__ import annotations

import logging
import math
from pathlib import Path
from typing import List, Sequence

import numpy as np

from .errors import GridFormatError, HeatmapError
from .grid import GridSpec, ProbabilityGrid

logger = logging.getLogger(__name__)

HGRD_MAGIC = b"HGRD"
HGRD_DTYPE = np.dtype("<f4")

# Longest header we are willing to scan for before giving up
MAX_HEADER_BYTES = 256

# Channels per row in a PGM contact sheet
CONTACT_SHEET_COLUMNS = 9


def encode_grid(grid: ProbabilityGrid) -> bytes:
    """Encode one grid as an HGRD v1 block."""
    spec = grid.spec
    header = (
        f"HGRD {spec.width} {spec.height} {spec.resolution!r} "
        f"{spec.origin[0]!r} {spec.origin[1]!r}\n"
    )
    return header.encode("ascii") + grid.values.astype(HGRD_DTYPE).tobytes()


def decode_grids(data: bytes) -> List[ProbabilityGrid]:
    """Decode every HGRD v1 block in a byte string.

    Raises:
        GridFormatError: If a header or payload is malformed.
    """
    grids: List[ProbabilityGrid] = []
    offset = 0
    while offset < len(data):
        newline = data.find(b"\n", offset, offset + MAX_HEADER_BYTES)
        if newline < 0:
            raise GridFormatError(f"Missing HGRD header line at byte {offset}")
        fields = data[offset:newline].split()
        if len(fields) != 6 or fields[0] != HGRD_MAGIC:
            raise GridFormatError(f"Invalid HGRD header at byte {offset}")
        try:
            width, height = int(fields[1]), int(fields[2])
            resolution = float(fields[3])
            origin = (float(fields[4]), float(fields[5]))
            spec = GridSpec(width=width, height=height, resolution=resolution, origin=origin)
        except ValueError as e:
            raise GridFormatError(f"Invalid HGRD header at byte {offset}: {e}") from e

        start = newline + 1
        end = start + width * height * HGRD_DTYPE.itemsize
        if end > len(data):
            raise GridFormatError(
                f"Truncated HGRD payload: expected {end - start} bytes, got {len(data) - start}"
            )
        values = np.frombuffer(data[start:end], dtype=HGRD_DTYPE).astype(np.float64)
        try:
            grids.append(ProbabilityGrid(spec, values.reshape(spec.shape)))
        except HeatmapError as e:
            raise GridFormatError(f"Invalid HGRD values at byte {start}: {e}") from e
        offset = end

    if not grids:
        raise GridFormatError("File contains no HGRD grid")
    return grids


def write_grids(path: Path, grids: Sequence[ProbabilityGrid]) -> None:
    """Write grids back to back into one HGRD file."""
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(b"".join(encode_grid(g) for g in grids))
    logger.info(f"Wrote {len(grids)} grid(s) to {path}")


def write_grid(path: Path, grid: ProbabilityGrid) -> None:
    """Write a single grid to an HGRD file."""
    write_grids(path, [grid])


def read_grids(path: Path) -> List[ProbabilityGrid]:
    """Read every grid stored in an HGRD file.

    Raises:
        FileNotFoundError: If the file doesn't exist.
        GridFormatError: If the file is malformed.
    """
    if not path.exists():
        raise FileNotFoundError(f"Grid file not found: {path}")
    return decode_grids(path.read_bytes())


def read_grid(path: Path) -> ProbabilityGrid:
    """Read the first grid stored in an HGRD file."""
    return read_grids(path)[0]


def to_gray8(values: np.ndarray) -> np.ndarray:
    """Scale values to 8-bit gray by their maximum (all-zero stays black)."""
    peak = float(np.max(values)) if values.size else 0.0
    if peak <= 0:
        return np.zeros(values.shape, dtype=np.uint8)
    return np.rint(np.clip(values, 0, None) / peak * 255).astype(np.uint8)


def write_pgm(path: Path, values: np.ndarray) -> None:
    """Write a 2D array as a binary (P5) PGM image.

    Float arrays are max-scaled; uint8 arrays are written as they are.
    """
    values = np.asarray(values)
    gray = values if values.dtype == np.uint8 else to_gray8(values.astype(np.float64))
    height, width = gray.shape
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(f"P5\n{width} {height}\n255\n".encode("ascii") + gray.tobytes())


def contact_sheet(channels: Sequence[np.ndarray], columns: int = CONTACT_SHEET_COLUMNS) -> np.ndarray:
    """Tile equally-shaped channels into one image, each scaled on its own."""
    height, width = channels[0].shape
    rows = math.ceil(len(channels) / columns)
    sheet = np.zeros((rows * height, columns * width), dtype=np.uint8)
    for index, channel in enumerate(channels):
        r, c = divmod(index, columns)
        sheet[r * height:(r + 1) * height, c * width:(c + 1) * width] = to_gray8(channel)
    return sheet
