"""Core data model, padding and sample validation."""

from granular_stereo.core.padding import PaddingRecord, crop_to_original, pad_to_multiple
from granular_stereo.core.types import (
    ContextPyramid,
    CorrelationVolume,
    DisparityMap,
    FeaturePyramid,
    GlobalCostVolume,
    IterationState,
    LatentCostSequence,
    LocalCostVolume,
    StereoSample,
)
from granular_stereo.core.validation import validate_sample

__all__ = [
    "ContextPyramid",
    "CorrelationVolume",
    "DisparityMap",
    "FeaturePyramid",
    "GlobalCostVolume",
    "IterationState",
    "LatentCostSequence",
    "LocalCostVolume",
    "PaddingRecord",
    "StereoSample",
    "crop_to_original",
    "pad_to_multiple",
    "validate_sample",
]
