"""16-bit PNG disparity files: stored value / 256, with 0 marking invalid pixels."""

import io
import logging
from pathlib import Path
from typing import Optional

import numpy as np
from PIL import Image, UnidentifiedImageError

from granular_stereo.core.types import DisparityMap
from granular_stereo.errors import BadBitDepth, DataIOError, ShapeMismatch
from granular_stereo.utils.fs_utils import safe_write_bytes

logger = logging.getLogger(__name__)

DISPARITY_SCALE = 256.0
MAX_STORED = 65535
_SIXTEEN_BIT_MODES = {"I;16", "I;16B", "I;16L", "I"}


def read_kitti_disp(path: Path) -> tuple[DisparityMap, np.ndarray]:
    """Read a 16-bit disparity PNG.

    Returns:
        Tuple of (DisparityMap with invalid pixels set to 0, bool valid mask).

    Raises:
        DataIOError: If the file cannot be opened.
        BadBitDepth: If the image is not single-channel 16-bit.
    """
    try:
        with Image.open(path) as image:
            mode = image.mode
            stored = np.array(image)
    except (OSError, UnidentifiedImageError) as e:
        raise DataIOError(f"Cannot read disparity image {path}: {e}") from e

    if mode not in _SIXTEEN_BIT_MODES or stored.ndim != 2:
        raise BadBitDepth(f"Disparity image {path} has mode {mode}; expected a 16-bit single channel")
    stored = stored.astype(np.int64)
    if stored.min() < 0 or stored.max() > MAX_STORED:
        raise BadBitDepth(f"Disparity image {path} holds values outside the 16-bit range")

    valid = stored > 0
    values = (stored / DISPARITY_SCALE).astype(np.float32)
    logger.debug(f"Read disparity image {path}: {valid.mean() * 100:.1f}% valid")
    return DisparityMap(values), valid


def encode_kitti_disp(disparity: np.ndarray, valid_mask: Optional[np.ndarray] = None) -> np.ndarray:
    """Stored uint16 grid: round(d·256) for valid pixels, at least 1; 0 elsewhere.

    Without a mask, positive finite values count as valid.
    """
    values = np.asarray(disparity, dtype=np.float64)
    if values.ndim != 2:
        raise ShapeMismatch(f"Disparity grid must be 2-D, got shape {values.shape}")
    if valid_mask is None:
        valid = np.isfinite(values) & (values > 0)
    else:
        valid = np.asarray(valid_mask, dtype=bool) & np.isfinite(values)

    stored = np.zeros(values.shape, dtype=np.int64)
    stored[valid] = np.maximum(1, np.rint(values[valid] * DISPARITY_SCALE).astype(np.int64))
    if (stored > MAX_STORED).any():
        logger.warning(f"Clamped {int((stored > MAX_STORED).sum())} disparities of 256 px or more")
        stored = np.minimum(stored, MAX_STORED)
    return stored.astype(np.uint16)


def write_kitti_disp(
    disparity: DisparityMap | np.ndarray, path: Path, valid_mask: Optional[np.ndarray] = None
) -> None:
    """Write a 16-bit disparity PNG, the inverse of ``read_kitti_disp`` on the 1/256 grid.

    Raises:
        DataIOError: If the file cannot be written.
    """
    values = disparity.values if isinstance(disparity, DisparityMap) else disparity
    stored = encode_kitti_disp(values, valid_mask)
    buffer = io.BytesIO()
    Image.fromarray(stored).save(buffer, format="PNG")
    try:
        safe_write_bytes(Path(path), buffer.getvalue())
    except OSError as e:
        raise DataIOError(f"Cannot write disparity image {path}: {e}") from e
