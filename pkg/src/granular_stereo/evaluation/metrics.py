"""Disparity error metrics: EPE, Bad-x and D1."""

import logging
import re
from typing import Union

import numpy as np

from granular_stereo.core.types import DisparityMap
from granular_stereo.errors import EmptyMask, ShapeMismatch, ValidationError

logger = logging.getLogger(__name__)

Grid = Union[DisparityMap, np.ndarray]

D1_PIXEL_THRESHOLD = 3.0
D1_RELATIVE_THRESHOLD = 0.05

_BAD_PATTERN = re.compile(r"^bad(\d+(?:\.\d+)?)$")


def _values(grid: Grid) -> np.ndarray:
    return grid.values if isinstance(grid, DisparityMap) else np.asarray(grid)


def _masked_errors(pred: Grid, gt: Grid, mask: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    pred_v, gt_v = _values(pred).astype(np.float64), _values(gt).astype(np.float64)
    mask = np.asarray(mask, dtype=bool)
    if pred_v.shape != gt_v.shape or mask.shape != gt_v.shape:
        raise ShapeMismatch(
            f"Prediction {pred_v.shape}, ground truth {gt_v.shape} and mask {mask.shape} must align"
        )
    if not mask.any():
        raise EmptyMask("Metric mask selects no pixels")
    return np.abs(pred_v[mask] - gt_v[mask]), gt_v[mask]


def epe(pred: Grid, gt: Grid, mask: np.ndarray) -> float:
    """Mean absolute disparity error over masked pixels.

    Raises:
        EmptyMask: If the mask is all false.
    """
    errors, _ = _masked_errors(pred, gt, mask)
    return float(errors.mean())


def bad_x(pred: Grid, gt: Grid, mask: np.ndarray, x: float) -> float:
    """Percentage of masked pixels whose error is strictly larger than ``x``.

    Raises:
        EmptyMask: If the mask is all false.
        ValidationError: If x is not positive.
    """
    if x <= 0:
        raise ValidationError(f"Invalid Bad-x threshold: {x}. Must be positive.")
    errors, _ = _masked_errors(pred, gt, mask)
    return float(100.0 * np.count_nonzero(errors > x) / errors.size)


def d1(pred: Grid, gt: Grid, mask: np.ndarray) -> float:
    """Percentage of masked pixels with error > 3 px and > 5% of the true disparity."""
    errors, truth = _masked_errors(pred, gt, mask)
    outliers = (errors > D1_PIXEL_THRESHOLD) & (errors > D1_RELATIVE_THRESHOLD * truth)
    return float(100.0 * np.count_nonzero(outliers) / errors.size)


def parse_metric_names(text: str) -> list[str]:
    """Split a comma-separated list such as ``epe,bad1,bad2,d1``.

    Raises:
        ValidationError: If a name is not epe, d1 or bad<threshold>.
    """
    names = [part.strip().lower() for part in text.split(",") if part.strip()]
    if not names:
        raise ValidationError("No metrics requested")
    for name in names:
        if name not in ("epe", "d1") and not _BAD_PATTERN.match(name):
            raise ValidationError(f"Unknown metric '{name}'. Use epe, d1 or bad<x> (e.g. bad2).")
    return names


def compute_metric(name: str, pred: Grid, gt: Grid, mask: np.ndarray) -> float:
    """Evaluate one metric by its report name."""
    if name == "epe":
        return epe(pred, gt, mask)
    if name == "d1":
        return d1(pred, gt, mask)
    match = _BAD_PATTERN.match(name)
    if match is None:
        raise ValidationError(f"Unknown metric '{name}'")
    return bad_x(pred, gt, mask, float(match.group(1)))
