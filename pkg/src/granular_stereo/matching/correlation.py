"""Group-wise all-pairs correlation along the epipolar line."""

import logging
from typing import Optional

import torch
import torch.nn.functional as F
from einops import rearrange

from granular_stereo.core.types import CorrelationVolume
from granular_stereo.errors import GroupMismatch, ShapeMismatch

logger = logging.getLogger(__name__)


def build_gapc(
    f_l: torch.Tensor,
    f_r: torch.Tensor,
    groups: int,
    max_disparity: Optional[int] = None,
) -> CorrelationVolume:
    """Grouped inner products between left pixels and right pixels shifted by every disparity.

    ``Corr[b, g, z, y, x] = <f_l^g(x, y), f_r^g(x - z, y)>``, summed over the
    channels of group g; candidates with x - z < 0 are zero.

    Args:
        f_l: Left features (B, C, H, W).
        f_r: Right features, same shape.
        groups: Number of channel groups; must divide C.
        max_disparity: Number of candidates D; defaults to W.

    Returns:
        CorrelationVolume (B, groups, D, H, W).

    Raises:
        ShapeMismatch: If the feature maps differ in shape.
        GroupMismatch: If groups does not divide C.
    """
    if f_l.shape != f_r.shape:
        raise ShapeMismatch(f"Left {tuple(f_l.shape)} and right {tuple(f_r.shape)} features differ")
    batch, channels, height, width = f_l.shape
    if groups <= 0 or channels % groups != 0:
        raise GroupMismatch(f"{groups} groups do not divide {channels} feature channels")
    disparities = width if max_disparity is None else max_disparity

    # windows[..., x, z] holds f_r at column x - z, zero where that falls off the image
    padded = F.pad(f_r, (disparities - 1, 0))
    windows = padded.unfold(-1, disparities, 1).flip(-1)

    left = rearrange(f_l, "b (g c) h w -> b g c h w", g=groups)
    right = rearrange(windows, "b (g c) h w d -> b g c h w d", g=groups)
    volume = torch.einsum("bgchw,bgchwd->bgdhw", left, right)

    logger.debug(f"GAPC volume {tuple(volume.shape)} from features {batch}x{channels}x{height}x{width}")
    return CorrelationVolume(volume.contiguous())
