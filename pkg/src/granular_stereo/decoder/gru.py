"""Selective multi-level ConvGRU.

Each level runs a small-kernel and a large-kernel ConvGRU on the same input
and blends their outputs with a per-pixel selection map A computed from the
context features: H = A * h_small + (1 - A) * h_large.
"""

import logging

import torch
import torch.nn as nn
import torch.nn.functional as F

from granular_stereo import instrumentation
from granular_stereo.core.types import ContextPyramid
from granular_stereo.errors import ShapeMismatch

logger = logging.getLogger(__name__)


class ConvGRU(nn.Module):
    """ConvGRU whose gate pre-activations receive the context injections (c_z, c_r, c_h)."""

    def __init__(self, hidden_dim: int, input_dim: int, kernel_size: int = 3):
        super().__init__()
        pad = kernel_size // 2
        self.convz = nn.Conv2d(hidden_dim + input_dim, hidden_dim, kernel_size, padding=pad)
        self.convr = nn.Conv2d(hidden_dim + input_dim, hidden_dim, kernel_size, padding=pad)
        self.convq = nn.Conv2d(hidden_dim + input_dim, hidden_dim, kernel_size, padding=pad)

    def forward(self, h: torch.Tensor, cz: torch.Tensor, cr: torch.Tensor, cq: torch.Tensor,
                x: torch.Tensor) -> torch.Tensor:
        hx = torch.cat([h, x], dim=1)
        z = torch.sigmoid(self.convz(hx) + cz)
        r = torch.sigmoid(self.convr(hx) + cr)
        q = torch.tanh(self.convq(torch.cat([r * h, x], dim=1)) + cq)
        instrumentation.emit("gate_z", z)
        instrumentation.emit("gate_r", r)
        return (1 - z) * h + z * q


class SelectiveConvGRU(nn.Module):
    def __init__(self, hidden_dim: int, input_dim: int, small_kernel_size: int = 3, large_kernel_size: int = 5):
        super().__init__()
        self.small_gru = ConvGRU(hidden_dim, input_dim, small_kernel_size)
        self.large_gru = ConvGRU(hidden_dim, input_dim, large_kernel_size)

    def forward(self, att: torch.Tensor, h: torch.Tensor, gates: tuple, *x: torch.Tensor) -> torch.Tensor:
        x = torch.cat(x, dim=1)
        return self.small_gru(h, *gates, x) * att + self.large_gru(h, *gates, x) * (1 - att)


def pool2x(x: torch.Tensor) -> torch.Tensor:
    return F.avg_pool2d(x, 3, stride=2, padding=1)


def interp(x: torch.Tensor, dest: torch.Tensor) -> torch.Tensor:
    return F.interpolate(x, dest.shape[2:], mode="bilinear", align_corners=True)


class SelectiveMultiLevelGRU(nn.Module):
    """Three selective GRUs at 1/16, 1/8 and 1/4, updated coarse to fine."""

    def __init__(self, hidden_dim: int, motion_dim: int, small_kernel: int, large_kernel: int):
        super().__init__()
        self.gru16 = SelectiveConvGRU(hidden_dim, hidden_dim, small_kernel, large_kernel)
        self.gru08 = SelectiveConvGRU(hidden_dim, 2 * hidden_dim, small_kernel, large_kernel)
        self.gru04 = SelectiveConvGRU(hidden_dim, motion_dim + hidden_dim, small_kernel, large_kernel)
        self.selection = nn.ModuleList([nn.Conv2d(hidden_dim, 1, kernel_size=3, padding=1) for _ in range(3)])

    def selection_maps(self, context: ContextPyramid) -> tuple[torch.Tensor, ...]:
        """A = sigmoid(conv(context)) per level, single channel."""
        maps = tuple(torch.sigmoid(conv(level)) for conv, level in zip(self.selection, context.levels))
        for att in maps:
            instrumentation.emit("gate_a", att)
        return maps

    def forward(self, hidden, motion, context, selection):
        return selective_gru_update(self, hidden, motion, context, selection)


def selective_gru_update(
    gru: SelectiveMultiLevelGRU,
    hidden: tuple[torch.Tensor, torch.Tensor, torch.Tensor],
    motion: torch.Tensor,
    context: ContextPyramid,
    selection: tuple[torch.Tensor, torch.Tensor, torch.Tensor],
) -> tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
    """One update of the hidden states (1/4, 1/8, 1/16).

    The motion feature enters at 1/4; levels exchange information through
    pooling (finer to coarser) and bilinear interpolation (coarser to finer).

    Raises:
        ShapeMismatch: If the motion feature is not at the 1/4 hidden resolution.
    """
    h1, h2, h3 = hidden
    if motion.shape[-2:] != h1.shape[-2:]:
        raise ShapeMismatch(
            f"Motion feature {tuple(motion.shape[-2:])} does not match hidden state {tuple(h1.shape[-2:])}"
        )
    gates = context.gate_inputs

    h3 = gru.gru16(selection[2], h3, gates[2], pool2x(h2))
    h2 = gru.gru08(selection[1], h2, gates[1], pool2x(h1), interp(h3, h2))
    h1 = gru.gru04(selection[0], h1, gates[0], motion, interp(h2, h1))

    for level in (h1, h2, h3):
        instrumentation.emit("hidden", level)
    return h1, h2, h3
