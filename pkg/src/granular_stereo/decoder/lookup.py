"""Linear-interpolated sampling of a cost volume around the current disparity."""

import logging

import torch

from granular_stereo.errors import ShapeMismatch

logger = logging.getLogger(__name__)


def sample_volume(volume: torch.Tensor, positions: torch.Tensor) -> torch.Tensor:
    """Sample a volume along its third axis at fractional positions.

    Args:
        volume: Tensor (B, C, D, H, W).
        positions: Tensor (B, R, H, W) of fractional indices; clamped to [0, D - 1].

    Returns:
        Tensor (B, C, R, H, W).
    """
    batch, channels, depth, height, width = volume.shape
    if positions.shape[0] != batch or positions.shape[-2:] != (height, width):
        raise ShapeMismatch(
            f"Sample positions {tuple(positions.shape)} do not fit volume {tuple(volume.shape)}"
        )
    positions = positions.clamp(0, depth - 1)
    lower = positions.floor()
    frac = (positions - lower).unsqueeze(1)
    # NaN positions keep a NaN weight but need a valid index
    i0 = torch.nan_to_num(lower, nan=0.0).long()
    i1 = (i0 + 1).clamp(max=depth - 1)

    samples = positions.shape[1]
    shape = (batch, channels, samples, height, width)
    v0 = torch.gather(volume, 2, i0.unsqueeze(1).expand(shape))
    v1 = torch.gather(volume, 2, i1.unsqueeze(1).expand(shape))
    return v0 * (1 - frac) + v1 * frac


def lookup_offsets(radius: int, like: torch.Tensor) -> torch.Tensor:
    """Offsets -r..r shaped (1, R, 1, 1)."""
    return torch.arange(-radius, radius + 1, dtype=like.dtype, device=like.device).view(1, -1, 1, 1)


def lookup_lcv(volume: torch.Tensor, disparity: torch.Tensor, radius: int) -> torch.Tensor:
    """Local cost around each pixel's disparity.

    Args:
        volume: Cost volume values (B, C, D, H, W).
        disparity: Current disparity (B, 1, H, W) in 1/4-resolution pixels.
        radius: Lookup radius r; R = 2r + 1 samples at d - r .. d + r.

    Returns:
        Tensor (B, C, R, H, W); samples outside [0, D - 1] take the boundary bin.
    """
    positions = disparity + lookup_offsets(radius, disparity)
    return sample_volume(volume, positions)
