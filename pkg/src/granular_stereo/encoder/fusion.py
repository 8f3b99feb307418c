"""Fusion of the merged token grids into a four-level feature pyramid."""

import logging
from typing import Optional

import torch.nn as nn

from granular_stereo.core.types import FeaturePyramid
from granular_stereo.encoder.tiling import TokenGrid
from granular_stereo.errors import ScaleMismatch, ValidationError
from granular_stereo.layers import ResidualBlock

logger = logging.getLogger(__name__)


def _fuse_block(dim: int, residual: bool) -> nn.Module:
    return ResidualBlock(dim, dim) if residual else nn.Identity()


class FusionNetwork(nn.Module):
    """Projects the token grids, moves them between resolutions and fuses them.

    Level 3 (1/16) sums the full-scale patch grid ``t0`` and the full-image grid
    ``t2``. Level 4 (1/32) is a strided convolution of level 3 plus the
    half-scale patch grid ``t1``. Levels 2 and 1 are transposed convolutions of
    the level above. Each level passes through a residual block, or through
    nothing when ``residual`` is False.
    """

    def __init__(self, in_dim: int, dim: int, residual: bool = True):
        super().__init__()
        self.dim = dim
        self.proj_patch = nn.Conv2d(in_dim, dim, kernel_size=1)
        self.proj_half = nn.Conv2d(in_dim, dim, kernel_size=1)
        self.proj_full = nn.Conv2d(in_dim, dim, kernel_size=1)

        self.down_16_32 = nn.Conv2d(dim, dim, kernel_size=3, stride=2, padding=1)
        self.up_16_8 = nn.ConvTranspose2d(dim, dim, kernel_size=4, stride=2, padding=1)
        self.up_8_4 = nn.ConvTranspose2d(dim, dim, kernel_size=4, stride=2, padding=1)

        self.fuse_4 = _fuse_block(dim, residual)
        self.fuse_8 = _fuse_block(dim, residual)
        self.fuse_16 = _fuse_block(dim, residual)
        self.fuse_32 = _fuse_block(dim, residual)

        for module in self.modules():
            if isinstance(module, (nn.Conv2d, nn.ConvTranspose2d)) and module.bias is not None:
                nn.init.zeros_(module.bias)

    def forward(
        self,
        t0: Optional[TokenGrid],
        t1: Optional[TokenGrid],
        t2: Optional[TokenGrid],
    ) -> FeaturePyramid:
        return fuse_pyramid(self, t0, t1, t2)


def fuse_pyramid(
    network: FusionNetwork,
    t0: Optional[TokenGrid],
    t1: Optional[TokenGrid],
    t2: Optional[TokenGrid],
) -> FeaturePyramid:
    """Build the pyramid at 1/4, 1/8, 1/16 and 1/32.

    Args:
        network: Fusion weights.
        t0: Full-scale patch grid at 1/16, or None when the patch path is off.
        t1: Half-scale patch grid at 1/32, or None.
        t2: Full-image grid at 1/16, or None when the full path is off.

    Returns:
        FeaturePyramid with ``network.dim`` channels per level.

    Raises:
        ScaleMismatch: If the grids do not come from the same source size.
        ValidationError: If neither 1/16 grid is given.
    """
    if t0 is None and t2 is None:
        raise ValidationError("fuse_pyramid needs the patch grid or the full-image grid at 1/16")
    if t0 is not None and t2 is not None and t0.tokens.shape[-2:] != t2.tokens.shape[-2:]:
        raise ScaleMismatch(
            f"Patch grid {tuple(t0.tokens.shape[-2:])} and full-image grid {tuple(t2.tokens.shape[-2:])} "
            "come from different source sizes"
        )

    reference = t0 if t0 is not None else t2
    height, width = reference.height, reference.width
    if t1 is not None and (2 * t1.height, 2 * t1.width) != (height, width):
        raise ScaleMismatch(
            f"Half-scale grid {t1.height}x{t1.width} is not half of the 1/16 grid {height}x{width}"
        )

    level_16 = 0
    if t0 is not None:
        level_16 = level_16 + network.proj_patch(t0.tokens)
    if t2 is not None:
        level_16 = level_16 + network.proj_full(t2.tokens)
    f3 = network.fuse_16(level_16)

    level_32 = network.down_16_32(f3)
    if t1 is not None:
        level_32 = level_32 + network.proj_half(t1.tokens)
    f4 = network.fuse_32(level_32)

    f2 = network.fuse_8(network.up_16_8(f3))
    f1 = network.fuse_4(network.up_8_4(f2))

    pyramid = FeaturePyramid((f1, f2, f3, f4))
    logger.debug(f"Fused pyramid shapes: {pyramid.shapes()}")
    return pyramid

