"""Local-global cost volume construction."""

from granular_stereo.matching.block import MatchingBlock, MatchingOutput
from granular_stereo.matching.correlation import build_gapc
from granular_stereo.matching.hourglass import LocalHourglass, regularize_lcv
from granular_stereo.matching.latent import (
    BidirectionalBlock,
    LatentCompressor,
    bidirectional_block,
    build_gcv,
    compress_to_latent,
)
from granular_stereo.matching.regression import DisparityRegression, regress_init_disparity, soft_argmax

__all__ = [
    "BidirectionalBlock",
    "DisparityRegression",
    "LatentCompressor",
    "LocalHourglass",
    "MatchingBlock",
    "MatchingOutput",
    "bidirectional_block",
    "build_gapc",
    "build_gcv",
    "compress_to_latent",
    "regress_init_disparity",
    "regularize_lcv",
    "soft_argmax",
]
