"""Initial disparity by soft-argmax over the local cost volume."""

import logging

import torch
import torch.nn as nn

from granular_stereo.core.types import LocalCostVolume

logger = logging.getLogger(__name__)


def soft_argmax(scores: torch.Tensor) -> torch.Tensor:
    """Expected disparity under a softmax of affinity scores.

    Args:
        scores: Tensor (B, D, H, W); higher means a better match.

    Returns:
        Tensor (B, 1, H, W) with values in [0, D - 1].
    """
    prob = torch.softmax(scores, dim=1)
    disp_values = torch.arange(scores.shape[1], dtype=scores.dtype, device=scores.device).view(1, -1, 1, 1)
    return torch.sum(prob * disp_values, dim=1, keepdim=True)


class DisparityRegression(nn.Module):
    """1x1x1 projection of the volume channels to one score per disparity."""

    def __init__(self, channels: int):
        super().__init__()
        self.classifier = nn.Conv3d(channels, 1, kernel_size=1)

    def forward(self, lcv: LocalCostVolume) -> torch.Tensor:
        return regress_init_disparity(self, lcv)


def regress_init_disparity(regression: DisparityRegression, lcv: LocalCostVolume) -> torch.Tensor:
    """Initial disparity d0 at 1/4 resolution, shape (B, 1, H/4, W/4)."""
    scores = regression.classifier(lcv.values).squeeze(1)
    return soft_argmax(scores)
