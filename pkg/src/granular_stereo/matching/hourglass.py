"""Local regularization of the correlation volume by a guided 3D hourglass."""

import logging

import torch
import torch.nn as nn
import torch.nn.functional as F

from granular_stereo.core.types import CorrelationVolume, FeaturePyramid, LocalCostVolume
from granular_stereo.errors import ScaleMismatch
from granular_stereo.layers import BasicConv

logger = logging.getLogger(__name__)

# Disparity-axis pooling levels (factors 2 and 4) folded back into the volume.
DISPARITY_POOL_LEVELS = 2


class FeatureAtt(nn.Module):
    """Excites volume channels with a sigmoid gate computed from 2D features."""

    def __init__(self, cv_chan: int, feat_chan: int):
        super().__init__()
        hidden = max(feat_chan // 2, 1)
        self.feat_att = nn.Sequential(
            BasicConv(feat_chan, hidden, kernel_size=1, stride=1, padding=0),
            nn.Conv2d(hidden, cv_chan, 1),
        )

    def forward(self, cv: torch.Tensor, feat: torch.Tensor) -> torch.Tensor:
        feat_att = self.feat_att(feat).unsqueeze(2)
        return torch.sigmoid(feat_att) * cv


class LocalHourglass(nn.Module):
    """Two-stage 3D encoder-decoder over (D, H, W) with skip connections.

    Stage features are gated by the pyramid level of matching resolution
    (1/4 at the input, 1/8 after one stride, 1/16 after two). The output is
    projected to ``out_channels``.
    """

    def __init__(self, groups: int, channels: int, out_channels: int, feat_chan: int):
        super().__init__()
        c = channels
        self.corr_stem = BasicConv(groups, c, is_3d=True, kernel_size=3, stride=1, padding=1)
        self.corr_att = FeatureAtt(c, feat_chan)

        self.conv1 = nn.Sequential(
            BasicConv(c, 2 * c, is_3d=True, kernel_size=3, padding=1, stride=2),
            BasicConv(2 * c, 2 * c, is_3d=True, kernel_size=3, padding=1, stride=1),
        )
        self.conv2 = nn.Sequential(
            BasicConv(2 * c, 4 * c, is_3d=True, kernel_size=3, padding=1, stride=2),
            BasicConv(4 * c, 4 * c, is_3d=True, kernel_size=3, padding=1, stride=1),
        )
        self.conv2_up = BasicConv(4 * c, 2 * c, deconv=True, is_3d=True, kernel_size=3, padding=1, stride=2)
        self.conv1_up = BasicConv(2 * c, c, deconv=True, is_3d=True, kernel_size=3, padding=1, stride=2)

        self.agg_1 = nn.Sequential(
            BasicConv(4 * c, 2 * c, is_3d=True, kernel_size=1, padding=0, stride=1),
            BasicConv(2 * c, 2 * c, is_3d=True, kernel_size=3, padding=1, stride=1),
        )
        self.agg_0 = nn.Sequential(
            BasicConv(2 * c, c, is_3d=True, kernel_size=1, padding=0, stride=1),
            BasicConv(c, c, is_3d=True, kernel_size=3, padding=1, stride=1),
        )

        self.feature_att_8 = FeatureAtt(2 * c, feat_chan)
        self.feature_att_16 = FeatureAtt(4 * c, feat_chan)
        self.feature_att_up_8 = FeatureAtt(2 * c, feat_chan)
        self.feature_att_out = FeatureAtt(c, feat_chan)
        self.out_proj = nn.Conv3d(c, out_channels, kernel_size=1, bias=False)

    def forward(self, gapc: CorrelationVolume, guide: FeaturePyramid) -> LocalCostVolume:
        return regularize_lcv(self, gapc, guide)


def _disparity_pooling(volume: torch.Tensor) -> torch.Tensor:
    """Adds coarser views of the volume along the disparity axis."""
    disparities = volume.shape[2]
    out = volume
    for level in range(1, DISPARITY_POOL_LEVELS + 1):
        factor = 2 ** level
        if factor > disparities:
            break
        pooled = F.avg_pool3d(volume, kernel_size=(factor, 1, 1), stride=(factor, 1, 1), ceil_mode=True)
        out = out + F.interpolate(pooled, size=volume.shape[-3:], mode="trilinear", align_corners=False)
    return out


def regularize_lcv(network: LocalHourglass, gapc: CorrelationVolume, guide: FeaturePyramid) -> LocalCostVolume:
    """Regularize the correlation volume into the local cost volume.

    Args:
        network: Hourglass weights.
        gapc: Correlation volume (B, G, D, H/4, W/4).
        guide: Left image features; levels 1-3 gate the matching scales.

    Returns:
        LocalCostVolume (B, C, D, H/4, W/4).

    Raises:
        ScaleMismatch: If the volume and the first pyramid level differ spatially.
    """
    volume = gapc.values
    f1, f2, f3 = guide.levels[:3]
    if volume.shape[-2:] != f1.shape[-2:]:
        raise ScaleMismatch(
            f"Volume spatial dims {tuple(volume.shape[-2:])} != pyramid level 1 {tuple(f1.shape[-2:])}"
        )

    x = network.corr_att(network.corr_stem(volume), f1)

    conv1 = network.feature_att_8(network.conv1(x), f2)
    conv2 = network.feature_att_16(network.conv2(conv1), f3)

    conv2_up = network.conv2_up(conv2, output_size=conv1.shape[-3:])
    conv1 = network.agg_1(torch.cat((conv2_up, conv1), dim=1))
    conv1 = network.feature_att_up_8(conv1, f2)

    conv1_up = network.conv1_up(conv1, output_size=x.shape[-3:])
    out = network.agg_0(torch.cat((conv1_up, x), dim=1))
    out = network.out_proj(network.feature_att_out(out, f1))

    return LocalCostVolume(_disparity_pooling(out))
