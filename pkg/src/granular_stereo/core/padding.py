"""Replicate-edge padding to a size multiple and its exact inverse."""

import logging
from dataclasses import dataclass
from typing import Union

import numpy as np
import torch
import torch.nn.functional as F

from granular_stereo.errors import RecordMismatch, ValidationError

logger = logging.getLogger(__name__)

Grid = Union[np.ndarray, torch.Tensor]


@dataclass(frozen=True)
class PaddingRecord:
    """Per-side padding applied to a grid of ``height`` x ``width``.

    Padding goes to the bottom and right only, so ``top`` and ``left`` are
    always zero for records made by ``pad_to_multiple``.
    """
    height: int
    width: int
    top: int = 0
    bottom: int = 0
    left: int = 0
    right: int = 0

    @property
    def padded_height(self) -> int:
        return self.top + self.height + self.bottom

    @property
    def padded_width(self) -> int:
        return self.left + self.width + self.right

    @property
    def is_identity(self) -> bool:
        return self.top == self.bottom == self.left == self.right == 0


def _ceil_to(value: int, multiple: int) -> int:
    return -(-value // multiple) * multiple


def pad_to_multiple(image: Grid, multiple: int) -> tuple[Grid, PaddingRecord]:
    """Pad the last two axes up to the next multiple by edge replication.

    Args:
        image: NumPy array or tensor whose last two axes are (H, W).
        multiple: Target divisor, at least 1.

    Returns:
        Tuple of (padded grid of the same type, PaddingRecord).

    Raises:
        ValidationError: If multiple < 1.
    """
    if multiple < 1:
        raise ValidationError(f"Invalid padding multiple: {multiple}. Must be >= 1.")

    height, width = int(image.shape[-2]), int(image.shape[-1])
    record = PaddingRecord(
        height=height,
        width=width,
        bottom=_ceil_to(height, multiple) - height,
        right=_ceil_to(width, multiple) - width,
    )
    if record.is_identity:
        return image, record

    if isinstance(image, torch.Tensor):
        # replicate mode needs a (N, C, H, W) layout
        lead = image.shape[:-2]
        flat = image.reshape(1, -1, height, width)
        padded = F.pad(flat, (0, record.right, 0, record.bottom), mode="replicate")
        padded = padded.reshape(*lead, record.padded_height, record.padded_width)
    else:
        pad_width = [(0, 0)] * (image.ndim - 2) + [(0, record.bottom), (0, record.right)]
        padded = np.pad(image, pad_width, mode="edge")

    logger.debug(f"Padded {height}x{width} to {record.padded_height}x{record.padded_width}")
    return padded, record


def crop_to_original(values: Grid, record: PaddingRecord) -> Grid:
    """Undo ``pad_to_multiple`` on the last two axes.

    Raises:
        RecordMismatch: If the grid is not the padded size the record describes.
    """
    height, width = int(values.shape[-2]), int(values.shape[-1])
    if (height, width) != (record.padded_height, record.padded_width):
        raise RecordMismatch(
            f"Grid is {height}x{width} but the padding record expects "
            f"{record.padded_height}x{record.padded_width}"
        )
    return values[..., record.top:record.top + record.height, record.left:record.left + record.width]
