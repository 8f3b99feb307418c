"""Spatial attention over token maps: windowed (local) and sub-sampled (global).

Both operate on sequences (N, H·W, C) laid out row-major over an H x W map
and return (N, H·W, out_dim).
"""

import logging

import torch
import torch.nn as nn
import torch.nn.functional as F
from einops import rearrange

from granular_stereo.layers import MultiHeadAttention

logger = logging.getLogger(__name__)


class LocallyGroupedAttention(nn.Module):
    """Self-attention restricted to non-overlapping ``window`` x ``window`` groups.

    Maps whose sides are not multiples of the window are zero-padded on the
    bottom/right and cropped afterwards.
    """

    def __init__(self, dim: int, out_dim: int, heads: int, window: int):
        super().__init__()
        self.window = window
        self.attn = MultiHeadAttention(heads, dim, dim, num_qk_channels=out_dim, num_output_channels=out_dim)

    def forward(self, x: torch.Tensor, height: int, width: int) -> torch.Tensor:
        ws = self.window
        grid = rearrange(x, "n (h w) c -> n c h w", h=height, w=width)
        pad_h = (ws - height % ws) % ws
        pad_w = (ws - width % ws) % ws
        if pad_h or pad_w:
            grid = F.pad(grid, (0, pad_w, 0, pad_h))
        hp, wp = grid.shape[-2:]

        windows = rearrange(grid, "n c (hb wh) (wb ww) -> (n hb wb) (wh ww) c", wh=ws, ww=ws)
        out = self.attn(windows, windows)
        out = rearrange(out, "(n hb wb) (wh ww) c -> n c (hb wh) (wb ww)",
                        hb=hp // ws, wb=wp // ws, wh=ws, ww=ws)
        out = out[..., :height, :width]
        return rearrange(out, "n c h w -> n (h w) c")


class SubsampledAttention(nn.Module):
    """Every token attends to a strided-convolution summary of the whole map."""

    def __init__(self, dim: int, out_dim: int, heads: int, subsample: int):
        super().__init__()
        self.subsample = subsample
        if subsample > 1:
            self.reduce = nn.Conv2d(dim, dim, kernel_size=subsample, stride=subsample)
            self.norm = nn.LayerNorm(dim)
        self.attn = MultiHeadAttention(heads, dim, dim, num_qk_channels=out_dim, num_output_channels=out_dim)

    def forward(self, x: torch.Tensor, height: int, width: int) -> torch.Tensor:
        kv = x
        if self.subsample > 1:
            sr = self.subsample
            grid = rearrange(x, "n (h w) c -> n c h w", h=height, w=width)
            pad_h = (sr - height % sr) % sr
            pad_w = (sr - width % sr) % sr
            if pad_h or pad_w:
                grid = F.pad(grid, (0, pad_w, 0, pad_h), mode="replicate")
            kv = self.norm(rearrange(self.reduce(grid), "n c h w -> n (h w) c"))
        return self.attn(x, kv)
