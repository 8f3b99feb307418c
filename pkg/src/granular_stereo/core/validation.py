"""Validation of stereo samples against the data-model invariants."""

import logging

import numpy as np

from granular_stereo.core.types import StereoSample
from granular_stereo.errors import InvalidDisparity, MaskInconsistency, ShapeMismatch

logger = logging.getLogger(__name__)


def validate_sample(sample: StereoSample) -> StereoSample:
    """Check a sample and return it unchanged.

    Args:
        sample: Sample to check.

    Returns:
        The same sample object.

    Raises:
        ShapeMismatch: If the views, ground truth or masks disagree in shape.
        InvalidDisparity: If ground truth is negative or non-finite under the valid mask.
        MaskInconsistency: If the non-occluded mask is not a subset of the valid mask.
    """
    if sample.left.ndim != 3 or sample.left.shape[0] != 3:
        raise ShapeMismatch(f"Left view must be (3, H, W), got {sample.left.shape}")
    if sample.left.shape != sample.right.shape:
        raise ShapeMismatch(
            f"Left view {sample.left.shape[1:]} and right view {sample.right.shape[1:]} differ"
        )

    grid = sample.left.shape[1:]
    for name in ("gt_disparity", "valid_mask", "noc_mask"):
        array = getattr(sample, name)
        if array is not None and array.shape != grid:
            raise ShapeMismatch(f"{name} has shape {array.shape}, expected {grid}")

    valid = sample.valid_mask
    if sample.gt_disparity is not None:
        region = valid if valid is not None else np.ones(grid, dtype=bool)
        under_mask = sample.gt_disparity[region]
        if not np.isfinite(under_mask).all():
            raise InvalidDisparity(f"Sample '{sample.name}' has non-finite disparity under the valid mask")
        if (under_mask < 0).any():
            raise InvalidDisparity(f"Sample '{sample.name}' has negative disparity under the valid mask")

    if sample.noc_mask is not None:
        reference = valid if valid is not None else np.ones(grid, dtype=bool)
        if (sample.noc_mask & ~reference).any():
            raise MaskInconsistency(
                f"Sample '{sample.name}' has non-occluded pixels outside the valid mask"
            )

    return sample
