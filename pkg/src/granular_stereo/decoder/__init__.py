"""Guided recurrent disparity refinement."""

from granular_stereo.decoder.guidance import GlobalGuidance, global_guidance, sample_global_volume
from granular_stereo.decoder.gru import ConvGRU, SelectiveConvGRU, SelectiveMultiLevelGRU, selective_gru_update
from granular_stereo.decoder.lookup import lookup_lcv, sample_volume
from granular_stereo.decoder.motion import MotionEncoder, motion_encode
from granular_stereo.decoder.refinement import DispHead, GuidedRefinement, decode_residual, run_iterations
from granular_stereo.decoder.upsample import (
    UpsampleMaskHead,
    bilinear_upsample,
    convex_upsample,
    convex_weights,
    upsample_disparity,
)

__all__ = [
    "ConvGRU",
    "DispHead",
    "GlobalGuidance",
    "GuidedRefinement",
    "MotionEncoder",
    "SelectiveConvGRU",
    "SelectiveMultiLevelGRU",
    "UpsampleMaskHead",
    "bilinear_upsample",
    "convex_upsample",
    "convex_weights",
    "decode_residual",
    "global_guidance",
    "lookup_lcv",
    "motion_encode",
    "run_iterations",
    "sample_global_volume",
    "sample_volume",
    "selective_gru_update",
    "upsample_disparity",
]
