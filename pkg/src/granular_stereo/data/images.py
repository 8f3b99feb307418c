"""8-bit PNG images and masks."""

import io
import logging
from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError

from granular_stereo.errors import DataIOError, ShapeMismatch
from granular_stereo.utils.fs_utils import safe_write_bytes

logger = logging.getLogger(__name__)


def _encode_png(array: np.ndarray) -> bytes:
    buffer = io.BytesIO()
    Image.fromarray(array).save(buffer, format="PNG")
    return buffer.getvalue()


def _write(path: Path, content: bytes) -> None:
    try:
        safe_write_bytes(Path(path), content)
    except OSError as e:
        raise DataIOError(f"Cannot write image {path}: {e}") from e


def read_image(path: Path) -> np.ndarray:
    """Read an RGB image as float32 (3, H, W) in [0, 1].

    Raises:
        DataIOError: If the file cannot be opened.
    """
    try:
        with Image.open(path) as image:
            pixels = np.asarray(image.convert("RGB"), dtype=np.uint8)
    except (OSError, UnidentifiedImageError) as e:
        raise DataIOError(f"Cannot read image {path}: {e}") from e
    return (pixels.transpose(2, 0, 1) / 255.0).astype(np.float32)


def to_uint8(image: np.ndarray) -> np.ndarray:
    """(3, H, W) floats in [0, 1] to (H, W, 3) uint8, rounding to nearest."""
    if image.ndim != 3 or image.shape[0] != 3:
        raise ShapeMismatch(f"Expected a (3, H, W) image, got shape {image.shape}")
    return np.rint(np.clip(image, 0.0, 1.0) * 255.0).astype(np.uint8).transpose(1, 2, 0)


def write_image(image: np.ndarray, path: Path) -> None:
    """Write a (3, H, W) float image as an 8-bit RGB PNG."""
    _write(path, _encode_png(np.ascontiguousarray(to_uint8(image))))


def read_mask(path: Path) -> np.ndarray:
    """Read a mask PNG; any non-zero pixel is true."""
    try:
        with Image.open(path) as image:
            pixels = np.asarray(image.convert("L"))
    except (OSError, UnidentifiedImageError) as e:
        raise DataIOError(f"Cannot read mask {path}: {e}") from e
    return pixels > 0


def write_mask(mask: np.ndarray, path: Path) -> None:
    """Write a bool (H, W) mask as an 8-bit PNG with values 0 and 255."""
    mask = np.asarray(mask, dtype=bool)
    if mask.ndim != 2:
        raise ShapeMismatch(f"Expected a (H, W) mask, got shape {mask.shape}")
    _write(path, _encode_png(np.where(mask, 255, 0).astype(np.uint8)))


def write_rgb(pixels: np.ndarray, path: Path) -> None:
    """Write an (H, W, 3) uint8 array as PNG."""
    _write(path, _encode_png(np.ascontiguousarray(pixels, dtype=np.uint8)))
