"""Multi-granularity encoder: tiled patch paths plus a full-image path."""

import logging
import math
from fractions import Fraction
from typing import Optional

import torch
import torch.nn as nn
import torch.nn.functional as F
from einops import rearrange

from granular_stereo.config.model import AblationConfig, EncoderConfig
from granular_stereo.core.types import FeaturePyramid
from granular_stereo.encoder.backbone import ViTBackbone
from granular_stereo.encoder.fusion import FusionNetwork, fuse_pyramid
from granular_stereo.encoder.tiling import SCALE_OVERLAP, TokenGrid, merge_patch_tokens, tile_image
from granular_stereo.errors import ShapeMismatch

logger = logging.getLogger(__name__)

# Token grids entering the fusion network sit at this stride of their source.
TOKEN_GRID_STRIDE = 16


class TokenReassembly(nn.Module):
    """Maps concatenated backbone taps (stride ``backbone_patch``) to stride 16.

    When 16 is a multiple of the backbone patch a single strided convolution
    does both the channel projection and the resampling; otherwise the taps
    are resized bilinearly first and projected with a 1x1 convolution.
    """

    def __init__(self, in_dim: int, out_dim: int, backbone_patch: int):
        super().__init__()
        self.exact = TOKEN_GRID_STRIDE % backbone_patch == 0
        if self.exact:
            factor = TOKEN_GRID_STRIDE // backbone_patch
            self.proj = nn.Conv2d(in_dim, out_dim, kernel_size=factor, stride=factor)
        else:
            self.proj = nn.Conv2d(in_dim, out_dim, kernel_size=1)

    def forward(self, tokens: torch.Tensor, source_height: int, source_width: int) -> torch.Tensor:
        target = (source_height // TOKEN_GRID_STRIDE, source_width // TOKEN_GRID_STRIDE)
        if not self.exact:
            tokens = F.interpolate(tokens, size=target, mode="bilinear", align_corners=False)
        out = self.proj(tokens)
        if out.shape[-2:] != target:
            raise ShapeMismatch(f"Reassembled grid {tuple(out.shape[-2:])} != expected {target}")
        return out


class MultiGranularityEncoder(nn.Module):
    """Fused feature pyramid from a padded image batch.

    Args:
        config: Encoder sizes.
        ablation: Toggles for the patch, half-scale, full-image and fusion parts.
    """

    def __init__(self, config: EncoderConfig, ablation: Optional[AblationConfig] = None):
        super().__init__()
        self.config = config
        self.ablation = ablation or AblationConfig()
        self.backbone = ViTBackbone(config)

        depth = config.depth
        self.patch_taps = (depth // 2, depth)
        self.full_taps = tuple(config.tap_layers)

        embed = config.embed_dim
        self.patch_reassembly = TokenReassembly(2 * embed, config.fusion_dim, config.backbone_patch)
        self.half_reassembly = TokenReassembly(2 * embed, config.fusion_dim, config.backbone_patch)
        self.full_reassembly = TokenReassembly(len(self.full_taps) * embed, config.fusion_dim,
                                               config.backbone_patch)
        self.fusion = FusionNetwork(config.fusion_dim, config.fusion_dim,
                                    residual=self.ablation.fusion_network)

    @property
    def output_dim(self) -> int:
        return self.config.fusion_dim

    def _patch_grid(self, images: torch.Tensor, scale: str) -> TokenGrid:
        """Tile, encode and merge one patch sequence, then reassemble it to stride 16."""
        patch = self.config.base_patch
        source = images if scale == "full" else F.avg_pool2d(images, 2)
        height, width = source.shape[-2:]

        # sources smaller than a tile are edge-padded and the extra tokens cropped
        padded = F.pad(source, (0, max(0, patch - width), 0, max(0, patch - height)), mode="replicate")
        grid = tile_image(padded, patch, SCALE_OVERLAP[scale])

        batch = images.shape[0]
        flat = rearrange(grid.patches, "b n c h w -> (b n) c h w")
        taps = self.backbone.encode_tokens(flat, self.patch_taps)

        merged = []
        for layer, tag in zip(self.patch_taps, ("patch_mid", "patch_last")):
            maps = rearrange(taps[layer], "(b n) c h w -> b n c h w", b=batch)
            token_grid = merge_patch_tokens(maps, grid, level_tag=tag)
            factor = patch / maps.shape[-1]
            merged.append(token_grid.tokens[..., :math.ceil(height / factor), :math.ceil(width / factor)])

        reassembly = self.patch_reassembly if scale == "full" else self.half_reassembly
        tokens = reassembly(torch.cat(merged, dim=1), height, width)
        grid_scale = Fraction(1, TOKEN_GRID_STRIDE) if scale == "full" else Fraction(1, 2 * TOKEN_GRID_STRIDE)
        logger.debug(f"{scale}-scale patch path: {grid.count} tiles -> grid {tuple(tokens.shape[-2:])}")
        return TokenGrid(tokens=tokens, scale=grid_scale, level_tag="patch_multi")

    def _full_grid(self, images: torch.Tensor) -> TokenGrid:
        taps = self.backbone.encode_tokens(images, self.full_taps)
        tokens = torch.cat([taps[layer] for layer in self.full_taps], dim=1)
        tokens = self.full_reassembly(tokens, images.shape[-2], images.shape[-1])
        return TokenGrid(tokens=tokens, scale=Fraction(1, TOKEN_GRID_STRIDE), level_tag="full_multi")

    def forward(self, images: torch.Tensor) -> FeaturePyramid:
        """
        Args:
            images: Tensor (B, 3, H, W) with H and W multiples of 32.

        Returns:
            FeaturePyramid at 1/4, 1/8, 1/16, 1/32.

        Raises:
            ShapeMismatch: If H or W is not a multiple of 32.
        """
        height, width = images.shape[-2:]
        if height % 32 or width % 32:
            raise ShapeMismatch(f"Encoder input {height}x{width} must be padded to a multiple of 32")

        t0 = t1 = t2 = None
        if self.ablation.patch_encoder:
            t0 = self._patch_grid(images, "full")
            if self.ablation.half_scale_patches:
                t1 = self._patch_grid(images, "half")
        if self.ablation.full_encoder:
            t2 = self._full_grid(images)
        return fuse_pyramid(self.fusion, t0, t1, t2)
