"""Latent compression of the correlation volume and bidirectional attention over it.

Each pixel's D correlation tokens are summarised by cross-attention from a
learned bank of L latent tokens, giving a sequence whose length no longer
depends on the disparity range. Bidirectional blocks then attend along the
latent (disparity) axis per pixel and across the image per latent.
"""

import logging

import torch
import torch.nn as nn
from einops import rearrange, repeat

from granular_stereo.core.types import CorrelationVolume, GlobalCostVolume, LatentCostSequence
from granular_stereo.errors import ScaleMismatch, ShapeMismatch
from granular_stereo.layers import FeedForward, MultiHeadAttention, init_transformer_weights, sinusoidal_encoding
from granular_stereo.matching.attention import LocallyGroupedAttention, SubsampledAttention

logger = logging.getLogger(__name__)


class LatentCompressor(nn.Module):
    """Cross-attention from a learned latent bank to per-pixel correlation tokens."""

    def __init__(self, groups: int, channels: int, latent_count: int, heads: int):
        super().__init__()
        self.channels = channels
        self.token_embed = nn.Linear(groups, channels)
        self.latents = nn.Parameter(torch.empty(latent_count, channels))
        self.q_norm = nn.LayerNorm(channels)
        self.kv_norm = nn.LayerNorm(channels)
        self.cross_attn = MultiHeadAttention(heads, channels, channels)

        nn.init.trunc_normal_(self.latents, std=0.02)
        self.apply(init_transformer_weights)

    def forward(self, gapc: CorrelationVolume) -> LatentCostSequence:
        return compress_to_latent(self, gapc)


def compress_to_latent(compressor: LatentCompressor, gapc: CorrelationVolume) -> LatentCostSequence:
    """Fixed-length latent sequence per pixel.

    Args:
        compressor: Embedding, latent bank and cross-attention weights.
        gapc: Correlation volume (B, G, D, H, W).

    Returns:
        LatentCostSequence with tokens (B·H·W, L, C).
    """
    volume = gapc.values
    batch, _, disparities, height, width = volume.shape

    tokens = rearrange(volume, "b g d h w -> (b h w) d g")
    tokens = compressor.token_embed(tokens)
    positions = torch.arange(disparities, dtype=tokens.dtype, device=tokens.device)
    tokens = compressor.kv_norm(tokens + sinusoidal_encoding(positions, compressor.channels))

    queries = compressor.q_norm(compressor.latents)
    queries = repeat(queries, "l c -> n l c", n=tokens.shape[0])
    latent = compressor.cross_attn(queries, tokens)
    return LatentCostSequence(latent, batch, height, width)


class BidirectionalBlock(nn.Module):
    """Attention along the latent axis per pixel, then across space per latent.

    Args:
        channels: Latent width C.
        feature_dim: Channels of the left features concatenated in the spatial step.
        heads: Attention heads.
        window: Side of the local attention windows.
        subsample: Key/value stride of the global attention.
        disparity: Enable the per-pixel latent self-attention.
        spatial: Enable the spatial attention.
    """

    def __init__(
        self,
        channels: int,
        feature_dim: int,
        heads: int,
        window: int,
        subsample: int,
        mlp_ratio: float = 2.0,
        disparity: bool = True,
        spatial: bool = True,
    ):
        super().__init__()
        self.disparity = disparity
        self.spatial = spatial
        joint = channels + feature_dim

        if disparity:
            self.disp_norm = nn.LayerNorm(channels)
            self.disp_attn = MultiHeadAttention(heads, channels, channels)
            self.disp_ffn_norm = nn.LayerNorm(channels)
            self.disp_ffn = FeedForward(channels, mlp_ratio)

        if spatial:
            self.lsa_norm = nn.LayerNorm(joint)
            self.lsa = LocallyGroupedAttention(joint, channels, heads, window)
            self.gsa_norm = nn.LayerNorm(joint)
            self.gsa = SubsampledAttention(joint, channels, heads, subsample)
            self.spatial_ffn_norm = nn.LayerNorm(channels)
            self.spatial_ffn = FeedForward(channels, mlp_ratio)

        self.apply(init_transformer_weights)

    def disparity_attention(self, tokens: torch.Tensor) -> torch.Tensor:
        """Per-pixel self-attention among the L latent tokens; tokens (N, L, C)."""
        h = self.disp_norm(tokens)
        tokens = tokens + self.disp_attn(h, h)
        return tokens + self.disp_ffn(self.disp_ffn_norm(tokens))

    def spatial_attention(self, seq: LatentCostSequence, f_l: torch.Tensor) -> torch.Tensor:
        """Windowed then sub-sampled attention over each latent's H x W map."""
        height, width = seq.height, seq.width
        latent_count = seq.latent_count
        x = rearrange(seq.tokens, "(b h w) l c -> (b l) (h w) c", b=seq.batch, h=height, w=width)
        feats = repeat(f_l, "b f h w -> (b l) (h w) f", l=latent_count)

        x = x + self.lsa(self.lsa_norm(torch.cat([x, feats], dim=-1)), height, width)
        x = x + self.gsa(self.gsa_norm(torch.cat([x, feats], dim=-1)), height, width)
        x = x + self.spatial_ffn(self.spatial_ffn_norm(x))
        return rearrange(x, "(b l) (h w) c -> (b h w) l c", b=seq.batch, l=latent_count, h=height, w=width)

    def forward(self, seq: LatentCostSequence, f_l: torch.Tensor) -> LatentCostSequence:
        return bidirectional_block(self, seq, f_l)


def bidirectional_block(block: BidirectionalBlock, seq: LatentCostSequence, f_l: torch.Tensor) -> LatentCostSequence:
    """One bidirectional attention block; output has the input's shape.

    Raises:
        ScaleMismatch: If f_l does not cover the sequence's spatial extent.
    """
    if f_l.shape[0] != seq.batch or tuple(f_l.shape[-2:]) != (seq.height, seq.width):
        raise ScaleMismatch(
            f"Features {tuple(f_l.shape)} do not match latent grid "
            f"batch={seq.batch}, {seq.height}x{seq.width}"
        )
    tokens = seq.tokens
    if block.disparity:
        tokens = block.disparity_attention(tokens)
        seq = seq.with_tokens(tokens)
    if block.spatial:
        tokens = block.spatial_attention(seq, f_l)
    return seq.with_tokens(tokens)


def build_gcv(s_final: LatentCostSequence, s0: LatentCostSequence) -> GlobalCostVolume:
    """Skip-connect the attended sequence to the compressed one and fold into (B, C, L, H, W).

    Raises:
        ShapeMismatch: If the two sequences differ in shape or extent.
    """
    same_extent = (s_final.batch, s_final.height, s_final.width) == (s0.batch, s0.height, s0.width)
    if s_final.tokens.shape != s0.tokens.shape or not same_extent:
        raise ShapeMismatch(
            f"Cannot add latent sequences {tuple(s_final.tokens.shape)} and {tuple(s0.tokens.shape)}"
        )
    values = rearrange(
        s_final.tokens + s0.tokens, "(b h w) l c -> b c l h w", b=s0.batch, h=s0.height, w=s0.width
    )
    return GlobalCostVolume(values)
