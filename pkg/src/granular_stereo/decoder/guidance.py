"""Global guidance: local lookup tokens attend to the pixel's global latent tokens."""

import logging
from typing import Optional

import torch
import torch.nn as nn
from einops import rearrange

from granular_stereo.core.types import GlobalCostVolume
from granular_stereo.decoder.lookup import lookup_offsets, sample_volume
from granular_stereo.errors import ShapeMismatch
from granular_stereo.layers import FeedForward, MultiHeadAttention, init_transformer_weights

logger = logging.getLogger(__name__)


class GlobalGuidance(nn.Module):
    """Per-pixel cross-attention from the R lookup tokens to the L global tokens, then a residual FFN.

    Args:
        channels: Token width C shared by the local and global volumes.
        latent_count: L, used for the optional learned latent position encoding.
        heads: Attention heads.
        latent_position_encoding: Add a learned embedding per latent index to the keys/values.
    """

    def __init__(self, channels: int, latent_count: int, heads: int = 1,
                 latent_position_encoding: bool = True, mlp_ratio: float = 2.0):
        super().__init__()
        self.q_norm = nn.LayerNorm(channels)
        self.kv_norm = nn.LayerNorm(channels)
        self.cross_attn = MultiHeadAttention(heads, channels, channels)
        self.ffn_norm = nn.LayerNorm(channels)
        self.ffn = FeedForward(channels, mlp_ratio)

        self.latent_pos: Optional[nn.Parameter] = None
        if latent_position_encoding:
            self.latent_pos = nn.Parameter(torch.empty(latent_count, channels))
            nn.init.trunc_normal_(self.latent_pos, std=0.02)
        self.apply(init_transformer_weights)

    def forward(self, lookup: torch.Tensor, gcv: GlobalCostVolume) -> torch.Tensor:
        return global_guidance(self, lookup, gcv)


def global_guidance(guidance: GlobalGuidance, lookup: torch.Tensor, gcv: GlobalCostVolume) -> torch.Tensor:
    """Globally enhanced lookup E_k.

    Args:
        guidance: Attention and FFN weights.
        lookup: Lookup tensor L_k (B, C, R, H, W).
        gcv: Global cost volume (B, C, L, H, W).

    Returns:
        Tensor with the shape of ``lookup``.

    Raises:
        ShapeMismatch: If batch, channels or spatial dims differ.
    """
    volume = gcv.values
    batch, channels, samples, height, width = lookup.shape
    if (volume.shape[0], volume.shape[1]) != (batch, channels) or volume.shape[-2:] != lookup.shape[-2:]:
        raise ShapeMismatch(
            f"Lookup {tuple(lookup.shape)} and global volume {tuple(volume.shape)} are not aligned"
        )

    queries = rearrange(lookup, "b c r h w -> (b h w) r c")
    keys = rearrange(volume, "b c l h w -> (b h w) l c")
    if guidance.latent_pos is not None:
        keys = keys + guidance.latent_pos

    attended = guidance.cross_attn(guidance.q_norm(queries), guidance.kv_norm(keys))
    enhanced = attended + guidance.ffn(guidance.ffn_norm(attended))
    return rearrange(enhanced, "(b h w) r c -> b c r h w", b=batch, h=height, w=width)


def sample_global_volume(
    gcv: GlobalCostVolume,
    disparity: torch.Tensor,
    max_disparity: int,
    radius: int,
) -> torch.Tensor:
    """Local sampling of the global volume, used when cross-attention guidance is off.

    The latent axis is treated as a resampled disparity axis: disparity d maps
    to latent index d·(L−1)/(D−1).

    Returns:
        Tensor (B, C, R, H, W).
    """
    latent_count = gcv.latent_count
    scale = (latent_count - 1) / max(max_disparity - 1, 1)
    positions = (disparity + lookup_offsets(radius, disparity)) * scale
    return sample_volume(gcv.values, positions)
