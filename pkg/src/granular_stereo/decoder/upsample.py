"""Convex upsampling of 1/4-resolution disparity to full resolution."""

import logging

import torch
import torch.nn as nn
import torch.nn.functional as F

logger = logging.getLogger(__name__)


class UpsampleMaskHead(nn.Module):
    """Predicts 9·f² convex-combination logits per coarse pixel from the finest hidden state."""

    def __init__(self, hidden_dim: int, factor: int = 4):
        super().__init__()
        self.factor = factor
        self.mask = nn.Sequential(
            nn.Conv2d(hidden_dim, 2 * hidden_dim, kernel_size=3, padding=1),
            nn.ReLU(),
            nn.Conv2d(2 * hidden_dim, 9 * factor * factor, kernel_size=1),
        )

    def forward(self, hidden: torch.Tensor) -> torch.Tensor:
        # scale mask to balance gradients
        return 0.25 * self.mask(hidden)


def convex_weights(mask: torch.Tensor, factor: int) -> torch.Tensor:
    """Softmax over the 3x3 neighbourhood; returns (N, 1, 9, f, f, H, W)."""
    n, _, h, w = mask.shape
    return torch.softmax(mask.view(n, 1, 9, factor, factor, h, w), dim=2)


def convex_upsample(disparity: torch.Tensor, mask: torch.Tensor, factor: int = 4) -> torch.Tensor:
    """Upsample [H/f, W/f] disparity to [H, W] using a convex combination.

    Coarse values are multiplied by ``factor`` so the output is in
    full-resolution pixels. Borders replicate the edge value, so a constant
    map stays constant.

    Args:
        disparity: Tensor (N, 1, H, W).
        mask: Logits (N, 9·f², H, W).
        factor: Upsampling factor f.

    Returns:
        Tensor (N, 1, f·H, f·W).
    """
    n, _, h, w = disparity.shape
    weights = convex_weights(mask, factor)

    padded = F.pad(factor * disparity, (1, 1, 1, 1), mode="replicate")
    neighbours = F.unfold(padded, [3, 3]).view(n, 1, 9, 1, 1, h, w)

    up = torch.sum(weights * neighbours, dim=2)
    up = up.permute(0, 1, 4, 2, 5, 3)
    return up.reshape(n, 1, factor * h, factor * w)


def upsample_disparity(head: UpsampleMaskHead, disparity: torch.Tensor, hidden: torch.Tensor) -> torch.Tensor:
    """Full-resolution disparity from the 1/4 map and the 1/4 hidden state."""
    return convex_upsample(disparity, head(hidden), head.factor)


def bilinear_upsample(disparity: torch.Tensor, factor: int = 4) -> torch.Tensor:
    """Bilinear resize by ``factor`` with values rescaled to full-resolution pixels."""
    return factor * F.interpolate(disparity, scale_factor=factor, mode="bilinear", align_corners=False)
