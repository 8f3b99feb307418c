"""Motion encoder mixing the cost evidence with the current disparity."""

import logging
from typing import Optional

import torch
import torch.nn as nn
import torch.nn.functional as F
from einops import rearrange

from granular_stereo.errors import ShapeMismatch

logger = logging.getLogger(__name__)


class MotionEncoder(nn.Module):
    def __init__(self, in_channels: int, motion_dim: int):
        super().__init__()
        self.conv1 = nn.Conv2d(in_channels, motion_dim, kernel_size=3, padding=1)
        self.conv2 = nn.Conv2d(motion_dim, motion_dim, kernel_size=3, padding=1)

    def forward(self, enhanced: Optional[torch.Tensor], lookup: Optional[torch.Tensor],
                disparity: torch.Tensor) -> torch.Tensor:
        return motion_encode(self, enhanced, lookup, disparity)


def _flatten(volume: torch.Tensor) -> torch.Tensor:
    return rearrange(volume, "b c r h w -> b (c r) h w")


def motion_encode(
    encoder: MotionEncoder,
    enhanced: Optional[torch.Tensor],
    lookup: Optional[torch.Tensor],
    disparity: torch.Tensor,
) -> torch.Tensor:
    """m_k from the channel concatenation [E_k, L_k, d_{k-1}].

    Args:
        encoder: Convolution weights.
        enhanced: Guided lookup E_k (B, C, R, H, W), or None when the global volume is off.
        lookup: Local lookup L_k (B, C, R, H, W), or None when it is not concatenated.
        disparity: d_{k-1} (B, 1, H, W).

    Returns:
        Motion feature (B, motion_dim, H, W).

    Raises:
        ShapeMismatch: If the inputs are not spatially aligned.
    """
    parts = [_flatten(part) for part in (enhanced, lookup) if part is not None]
    parts.append(disparity)
    if len({(part.shape[0], *part.shape[-2:]) for part in parts}) != 1:
        raise ShapeMismatch(f"Motion encoder inputs are not aligned: {[tuple(p.shape) for p in parts]}")

    x = F.relu(encoder.conv1(torch.cat(parts, dim=1)))
    return F.relu(encoder.conv2(x))
