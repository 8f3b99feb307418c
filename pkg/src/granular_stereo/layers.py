"""Building blocks shared by the encoder, matching block and decoder."""

import logging
import math
from typing import Optional

import torch
import torch.nn as nn
import torch.nn.functional as F
from einops import rearrange

from granular_stereo import instrumentation

logger = logging.getLogger(__name__)


def group_count(channels: int, preferred: int = 8) -> int:
    """Largest group count <= preferred that divides ``channels``."""
    for groups in range(min(preferred, channels), 0, -1):
        if channels % groups == 0:
            return groups
    return 1


def init_transformer_weights(module: nn.Module, std: float = 0.02) -> None:
    """Truncated-normal linear weights, zero biases, unit-affine layer norms."""
    if isinstance(module, nn.Linear):
        nn.init.trunc_normal_(module.weight, std=std)
        if module.bias is not None:
            nn.init.zeros_(module.bias)
    elif isinstance(module, nn.LayerNorm):
        nn.init.ones_(module.weight)
        nn.init.zeros_(module.bias)


def sinusoidal_encoding(positions: torch.Tensor, dim: int) -> torch.Tensor:
    """Fixed sine/cosine encoding of scalar positions.

    Args:
        positions: Tensor of shape (N,).
        dim: Encoding width; odd widths drop the last cosine channel.

    Returns:
        Tensor (N, dim).
    """
    half = (dim + 1) // 2
    freqs = torch.exp(
        -math.log(10000.0) * torch.arange(half, dtype=positions.dtype, device=positions.device) / half
    )
    angles = positions[:, None] * freqs[None, :]
    encoding = torch.cat([angles.sin(), angles.cos()], dim=-1)
    return encoding[:, :dim]


class MultiHeadAttention(nn.Module):
    """Multi-head attention with separate query and key/value inputs.

    When an ``attention`` capture is active the softmax weights are computed
    explicitly and emitted; otherwise the fused kernel is used.
    """

    def __init__(
        self,
        num_heads: int,
        num_q_input_channels: int,
        num_kv_input_channels: int,
        num_qk_channels: Optional[int] = None,
        num_v_channels: Optional[int] = None,
        num_output_channels: Optional[int] = None,
    ):
        super().__init__()

        if num_qk_channels is None:
            num_qk_channels = num_q_input_channels
        if num_v_channels is None:
            num_v_channels = num_qk_channels
        if num_output_channels is None:
            num_output_channels = num_q_input_channels

        if num_qk_channels % num_heads != 0:
            raise ValueError("num_qk_channels must be divisible by num_heads")
        if num_v_channels % num_heads != 0:
            raise ValueError("num_v_channels must be divisible by num_heads")

        self.num_heads = num_heads
        self.dp_scale = (num_qk_channels // num_heads) ** -0.5

        self.q_proj = nn.Linear(num_q_input_channels, num_qk_channels)
        self.k_proj = nn.Linear(num_kv_input_channels, num_qk_channels)
        self.v_proj = nn.Linear(num_kv_input_channels, num_v_channels)
        self.o_proj = nn.Linear(num_v_channels, num_output_channels)

    def forward(self, x_q: torch.Tensor, x_kv: torch.Tensor) -> torch.Tensor:
        """
        Args:
            x_q: Queries (B, N, Dq).
            x_kv: Keys/values (B, M, Dkv).

        Returns:
            Tensor (B, N, num_output_channels).
        """
        q = self.q_proj(x_q)
        k = self.k_proj(x_kv)
        v = self.v_proj(x_kv)
        q, k, v = (rearrange(x, "b n (h c) -> b h n c", h=self.num_heads) for x in (q, k, v))

        if instrumentation.is_capturing("attention"):
            weights = torch.softmax(torch.einsum("bhic,bhjc->bhij", q * self.dp_scale, k), dim=-1)
            instrumentation.emit("attention", weights)
            o = torch.einsum("bhij,bhjc->bhic", weights, v)
        else:
            o = F.scaled_dot_product_attention(q, k, v)

        o = rearrange(o, "b h n c -> b n (h c)")
        return self.o_proj(o)


class FeedForward(nn.Module):
    def __init__(self, dim: int, mult: float = 4.0, out_dim: Optional[int] = None):
        super().__init__()
        hidden = int(dim * mult)
        self.net = nn.Sequential(
            nn.Linear(dim, hidden),
            nn.GELU(),
            nn.Linear(hidden, out_dim or dim),
        )

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.net(x)


class BasicConv(nn.Module):
    """Convolution (2D or 3D, optionally transposed) + group norm + leaky ReLU."""

    def __init__(self, in_channels, out_channels, deconv=False, is_3d=False, norm=True, relu=True, **kwargs):
        super().__init__()
        self.relu = relu
        if is_3d:
            conv = nn.ConvTranspose3d if deconv else nn.Conv3d
        else:
            conv = nn.ConvTranspose2d if deconv else nn.Conv2d
        self.conv = conv(in_channels, out_channels, bias=False, **kwargs)
        self.norm = nn.GroupNorm(group_count(out_channels), out_channels) if norm else None

    def forward(self, x: torch.Tensor, output_size=None) -> torch.Tensor:
        if output_size is not None:
            x = self.conv(x, output_size=output_size)
        else:
            x = self.conv(x)
        if self.norm is not None:
            x = self.norm(x)
        if self.relu:
            x = F.leaky_relu(x, 0.01)
        return x


class ResidualBlock(nn.Module):
    """Two 3x3 convolutions with group norm and an identity (or strided 1x1) shortcut."""

    def __init__(self, in_planes: int, planes: int, stride: int = 1):
        super().__init__()
        self.conv1 = nn.Conv2d(in_planes, planes, kernel_size=3, padding=1, stride=stride)
        self.conv2 = nn.Conv2d(planes, planes, kernel_size=3, padding=1)
        self.norm1 = nn.GroupNorm(group_count(planes), planes)
        self.norm2 = nn.GroupNorm(group_count(planes), planes)
        self.relu = nn.ReLU()

        if stride == 1 and in_planes == planes:
            self.downsample = None
        else:
            self.downsample = nn.Sequential(
                nn.Conv2d(in_planes, planes, kernel_size=1, stride=stride),
                nn.GroupNorm(group_count(planes), planes),
            )

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        y = self.relu(self.norm1(self.conv1(x)))
        y = self.relu(self.norm2(self.conv2(y)))
        if self.downsample is not None:
            x = self.downsample(x)
        return self.relu(x + y)
