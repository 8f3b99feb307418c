"""Matching block: correlation, local regularization, latent global volume, initial disparity."""

import logging
from dataclasses import dataclass
from typing import Optional

import torch
import torch.nn as nn

from granular_stereo.config.model import AblationConfig, MatchingConfig
from granular_stereo.core.types import (
    CorrelationVolume,
    FeaturePyramid,
    GlobalCostVolume,
    LatentCostSequence,
    LocalCostVolume,
)
from granular_stereo.matching.correlation import build_gapc
from granular_stereo.matching.hourglass import LocalHourglass, regularize_lcv
from granular_stereo.matching.latent import (
    BidirectionalBlock,
    LatentCompressor,
    bidirectional_block,
    build_gcv,
    compress_to_latent,
)
from granular_stereo.matching.regression import DisparityRegression, regress_init_disparity

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class MatchingOutput:
    """Volumes and initial disparity produced for one batch.

    Attributes:
        gapc: Correlation volume.
        lcv: Locally regularized volume.
        init_disparity: d0 at 1/4 resolution, (B, 1, H/4, W/4).
        latent: Compressed sequence S0, or None without the global volume.
        gcv: Global cost volume, or None without the global volume.
    """
    gapc: CorrelationVolume
    lcv: LocalCostVolume
    init_disparity: torch.Tensor
    latent: Optional[LatentCostSequence] = None
    gcv: Optional[GlobalCostVolume] = None


class MatchingBlock(nn.Module):
    def __init__(self, config: MatchingConfig, feature_dim: int, ablation: Optional[AblationConfig] = None):
        super().__init__()
        self.config = config
        self.ablation = ablation or AblationConfig()

        self.hourglass = LocalHourglass(
            config.groups, config.volume_channels, config.latent_channels, feature_dim
        )
        self.regression = DisparityRegression(config.latent_channels)

        self.use_global = self.ablation.global_volume
        if self.use_global:
            self.compressor = LatentCompressor(
                config.groups, config.latent_channels, config.latent_count, config.heads
            )
            self.blocks = nn.ModuleList([
                BidirectionalBlock(
                    config.latent_channels,
                    feature_dim,
                    config.heads,
                    config.lsa_window,
                    config.gsa_subsample,
                    disparity=self.ablation.disparity_attention,
                    spatial=self.ablation.spatial_attention,
                )
                for _ in range(config.attention_blocks)
            ])

    def forward(self, left: FeaturePyramid, right: FeaturePyramid) -> MatchingOutput:
        """
        Args:
            left: Left image features.
            right: Right image features.

        Returns:
            MatchingOutput built from the 1/4-resolution level.
        """
        f_l, f_r = left.levels[0], right.levels[0]
        gapc = build_gapc(f_l, f_r, self.config.groups, self.config.max_disparity)
        lcv = regularize_lcv(self.hourglass, gapc, left)
        init_disparity = regress_init_disparity(self.regression, lcv)

        if not self.use_global:
            return MatchingOutput(gapc=gapc, lcv=lcv, init_disparity=init_disparity)

        s0 = compress_to_latent(self.compressor, gapc)
        seq = s0
        for block in self.blocks:
            seq = bidirectional_block(block, seq, f_l)
        gcv = build_gcv(seq, s0)
        logger.debug(f"LCV {tuple(lcv.values.shape)}, GCV {tuple(gcv.values.shape)}")
        return MatchingOutput(gapc=gapc, lcv=lcv, init_disparity=init_disparity, latent=s0, gcv=gcv)
