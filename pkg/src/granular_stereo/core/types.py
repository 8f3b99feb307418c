"""Shared data model: samples, disparities, pyramids and volumes.

Image-space values (samples, disparity maps) are NumPy arrays so file I/O
stays bit-exact; network intermediates are batched torch tensors. All
types are frozen after construction.
"""

import logging
from dataclasses import dataclass
from fractions import Fraction
from typing import Optional

import numpy as np
import torch

from granular_stereo.errors import ScaleMismatch, ShapeMismatch

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class StereoSample:
    """Rectified stereo pair with optional ground truth.

    Attributes:
        left: float32 array (3, H, W) with values in [0, 1].
        right: float32 array (3, H, W).
        gt_disparity: Optional float32 array (H, W) of left-view disparities in pixels.
        valid_mask: Optional bool array (H, W); pixels where gt is defined.
        noc_mask: Optional bool array (H, W); the non-occluded subset of valid.
        name: Identifier used in reports.
    """
    left: np.ndarray
    right: np.ndarray
    gt_disparity: Optional[np.ndarray] = None
    valid_mask: Optional[np.ndarray] = None
    noc_mask: Optional[np.ndarray] = None
    name: str = "sample"

    @property
    def height(self) -> int:
        return int(self.left.shape[-2])

    @property
    def width(self) -> int:
        return int(self.left.shape[-1])

    def effective_valid_mask(self) -> np.ndarray:
        """Valid mask, defaulting to the finite ground-truth pixels."""
        if self.valid_mask is not None:
            return self.valid_mask
        if self.gt_disparity is None:
            return np.zeros((self.height, self.width), dtype=bool)
        return np.isfinite(self.gt_disparity)


@dataclass(frozen=True, eq=False)
class DisparityMap:
    """Grid of pixel disparities.

    Attributes:
        values: float32 array (H, W), finite.
        resolution_scale: Grid scale relative to the full image (1 = full resolution);
            values are in pixels of this grid.
    """
    values: np.ndarray
    resolution_scale: Fraction = Fraction(1)

    def __post_init__(self):
        if self.values.ndim != 2:
            raise ShapeMismatch(f"DisparityMap expects a 2-D grid, got shape {self.values.shape}")
        if self.resolution_scale <= 0:
            raise ScaleMismatch(f"resolution_scale must be positive, got {self.resolution_scale}")
        if not np.isfinite(self.values).all():
            raise ShapeMismatch("DisparityMap values must be finite")

    @classmethod
    def from_tensor(cls, values: torch.Tensor, resolution_scale: Fraction = Fraction(1)) -> "DisparityMap":
        """Wrap a (H, W), (1, H, W) or (1, 1, H, W) tensor."""
        array = values.detach().to(torch.float32).cpu().numpy()
        return cls(np.ascontiguousarray(array.reshape(array.shape[-2:])), resolution_scale)


@dataclass(frozen=True, eq=False)
class FeaturePyramid:
    """Four feature levels at 1/4, 1/8, 1/16 and 1/32 of the padded input.

    Attributes:
        levels: Tensors (B, dim, H/2^(i+1), W/2^(i+1)) for i = 1..4.
    """
    levels: tuple[torch.Tensor, ...]

    def __post_init__(self):
        if len(self.levels) != 4:
            raise ShapeMismatch(f"FeaturePyramid needs exactly 4 levels, got {len(self.levels)}")
        for finer, coarser in zip(self.levels, self.levels[1:]):
            if finer.shape[-2] != 2 * coarser.shape[-2] or finer.shape[-1] != 2 * coarser.shape[-1]:
                raise ScaleMismatch(
                    f"Pyramid levels must halve exactly: {tuple(finer.shape[-2:])} -> "
                    f"{tuple(coarser.shape[-2:])}"
                )

    @property
    def dim(self) -> int:
        return int(self.levels[0].shape[1])

    def shapes(self) -> list[tuple[int, int]]:
        return [tuple(level.shape[-2:]) for level in self.levels]


@dataclass(frozen=True, eq=False)
class ContextPyramid:
    """Context features at 1/4, 1/8, 1/16 with the recurrent gate injections.

    Attributes:
        levels: Three tensors (B, hidden, h_i, w_i).
        gate_inputs: Per level, the (c_z, c_r, c_h) triplet added to the gate pre-activations.
    """
    levels: tuple[torch.Tensor, ...]
    gate_inputs: tuple[tuple[torch.Tensor, torch.Tensor, torch.Tensor], ...]

    def __post_init__(self):
        if len(self.levels) != 3 or len(self.gate_inputs) != 3:
            raise ShapeMismatch("ContextPyramid needs exactly 3 levels and 3 gate triplets")
        for level, gates in zip(self.levels, self.gate_inputs):
            for gate in gates:
                if gate.shape[-2:] != level.shape[-2:]:
                    raise ShapeMismatch("Gate inputs must share their level's spatial dims")


@dataclass(frozen=True, eq=False)
class CorrelationVolume:
    """Grouped all-pairs correlation, values (B, G, D, H/4, W/4)."""
    values: torch.Tensor

    @property
    def groups(self) -> int:
        return int(self.values.shape[1])

    @property
    def max_disparity(self) -> int:
        return int(self.values.shape[2])


@dataclass(frozen=True, eq=False)
class LocalCostVolume:
    """Locally regularized volume, values (B, C, D, H/4, W/4)."""
    values: torch.Tensor

    @property
    def channels(self) -> int:
        return int(self.values.shape[1])

    @property
    def max_disparity(self) -> int:
        return int(self.values.shape[2])


@dataclass(frozen=True, eq=False)
class LatentCostSequence:
    """Fixed-length latent compression, tokens (B·H/4·W/4, L, C).

    The batch and spatial extent are kept so the sequence can be folded back
    into a grid.
    """
    tokens: torch.Tensor
    batch: int
    height: int
    width: int

    def __post_init__(self):
        if self.tokens.ndim != 3 or self.tokens.shape[0] != self.batch * self.height * self.width:
            raise ShapeMismatch(
                f"Latent tokens {tuple(self.tokens.shape)} do not match "
                f"batch={self.batch}, height={self.height}, width={self.width}"
            )

    @property
    def latent_count(self) -> int:
        return int(self.tokens.shape[1])

    @property
    def channels(self) -> int:
        return int(self.tokens.shape[2])

    def with_tokens(self, tokens: torch.Tensor) -> "LatentCostSequence":
        return LatentCostSequence(tokens, self.batch, self.height, self.width)


@dataclass(frozen=True, eq=False)
class GlobalCostVolume:
    """Attention-regularized volume, values (B, C, L, H/4, W/4)."""
    values: torch.Tensor

    @property
    def latent_count(self) -> int:
        return int(self.values.shape[2])


@dataclass(frozen=True, eq=False)
class IterationState:
    """Recurrent state between refinement steps.

    Attributes:
        disparity: (B, 1, H/4, W/4), non-negative.
        hidden: Hidden states at 1/4, 1/8, 1/16.
        iteration_index: Number of completed updates.
    """
    disparity: torch.Tensor
    hidden: tuple[torch.Tensor, ...]
    iteration_index: int = 0
