"""Single-channel PFM disparity files."""

import io
import logging
import re
from pathlib import Path

import numpy as np

from granular_stereo.errors import BadHeader, DataIOError, ShapeMismatch, TruncatedFile
from granular_stereo.utils.fs_utils import safe_write_bytes

logger = logging.getLogger(__name__)

_DIMS = re.compile(rb"^(\d+)\s+(\d+)\s*$")


def decode_pfm(data: bytes) -> tuple[np.ndarray, float]:
    """Parse PFM bytes into a top-to-bottom float32 grid and its absolute scale.

    Raises:
        BadHeader: If the magic is not "Pf" or the dims/scale lines are malformed.
        TruncatedFile: If the payload is shorter than width x height floats.
    """
    stream = io.BytesIO(data)
    magic = stream.readline().rstrip()
    if magic == b"PF":
        raise BadHeader("PFM header 'PF' is a 3-channel image; disparity files use 'Pf'")
    if magic != b"Pf":
        raise BadHeader(f"Not a PFM file (header {magic[:8]!r})")

    dims = _DIMS.match(stream.readline())
    if dims is None:
        raise BadHeader("Malformed PFM dimensions line")
    width, height = int(dims.group(1)), int(dims.group(2))

    try:
        scale = float(stream.readline().strip())
    except ValueError as e:
        raise BadHeader(f"Malformed PFM scale line: {e}") from e
    if scale == 0:
        raise BadHeader("PFM scale must be non-zero")
    endian = "<" if scale < 0 else ">"

    payload = stream.read()
    expected = 4 * width * height
    if len(payload) < expected:
        raise TruncatedFile(f"PFM payload has {len(payload)} bytes, expected {expected}")

    grid = np.frombuffer(payload[:expected], dtype=f"{endian}f4").reshape(height, width)
    return np.flipud(grid).astype(np.float32), abs(scale)


def encode_pfm(grid: np.ndarray, little_endian: bool = True, scale: float = 1.0) -> bytes:
    """Serialize a (H, W) grid as PFM with rows stored bottom-to-top."""
    grid = np.asarray(grid)
    if grid.ndim != 2:
        raise ShapeMismatch(f"PFM disparity grids must be 2-D, got shape {grid.shape}")
    height, width = grid.shape
    endian = "<" if little_endian else ">"
    signed_scale = -abs(scale) if little_endian else abs(scale)
    header = f"Pf\n{width} {height}\n{signed_scale}\n".encode("ascii")
    payload = np.ascontiguousarray(np.flipud(grid), dtype=f"{endian}f4").tobytes()
    return header + payload


def read_pfm(path: Path) -> tuple[np.ndarray, float]:
    """Read a single-channel PFM file.

    Returns:
        Tuple of (float32 grid (H, W) with row 0 at the top, absolute scale).

    Raises:
        DataIOError: If the file cannot be read.
        BadHeader: If the header is not a single-channel PFM header.
        TruncatedFile: If the payload is short.
    """
    try:
        data = Path(path).read_bytes()
    except OSError as e:
        raise DataIOError(f"Cannot read PFM file {path}: {e}") from e
    grid, scale = decode_pfm(data)
    logger.debug(f"Read PFM {path}: {grid.shape[1]}x{grid.shape[0]}")
    return grid, scale


def write_pfm(grid: np.ndarray, path: Path, little_endian: bool = True, scale: float = 1.0) -> None:
    """Write a (H, W) grid as a single-channel PFM file.

    Raises:
        DataIOError: If the file cannot be written.
    """
    content = encode_pfm(grid, little_endian, scale)
    try:
        safe_write_bytes(Path(path), content)
    except OSError as e:
        raise DataIOError(f"Cannot write PFM file {path}: {e}") from e
