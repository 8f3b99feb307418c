"""Guided recurrent refinement loop."""

import logging
from typing import Optional

import torch
import torch.nn as nn

from granular_stereo import instrumentation
from granular_stereo.config.model import AblationConfig, DecoderConfig
from granular_stereo.core.types import ContextPyramid, GlobalCostVolume, IterationState, LocalCostVolume
from granular_stereo.decoder.guidance import GlobalGuidance, global_guidance, sample_global_volume
from granular_stereo.decoder.gru import SelectiveMultiLevelGRU, selective_gru_update
from granular_stereo.decoder.lookup import lookup_lcv
from granular_stereo.decoder.motion import MotionEncoder, motion_encode
from granular_stereo.decoder.upsample import UpsampleMaskHead, upsample_disparity
from granular_stereo.errors import ValidationError

logger = logging.getLogger(__name__)


class DispHead(nn.Module):
    def __init__(self, input_dim: int, hidden_dim: int, output_dim: int = 1):
        super().__init__()
        self.conv1 = nn.Conv2d(input_dim, hidden_dim, 3, padding=1)
        self.conv2 = nn.Conv2d(hidden_dim, output_dim, 3, padding=1)
        self.relu = nn.ReLU()

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.conv2(self.relu(self.conv1(x)))


def decode_residual(head: DispHead, hidden: torch.Tensor, disparity: torch.Tensor) -> torch.Tensor:
    """d_k = max(d_{k-1} + Δd_k, 0) with Δd_k predicted from the 1/4 hidden state."""
    return torch.clamp(disparity + head(hidden), min=0)


class GuidedRefinement(nn.Module):
    """Recurrent decoder: lookup, guidance, motion encoding, selective GRU, residual update.

    Args:
        config: Decoder sizes.
        channels: Token width C of both cost volumes.
        latent_count: L of the global cost volume.
        ablation: Component toggles.
    """

    def __init__(
        self,
        config: DecoderConfig,
        channels: int,
        latent_count: int,
        ablation: Optional[AblationConfig] = None,
    ):
        super().__init__()
        self.config = config
        self.ablation = ablation or AblationConfig()
        samples = config.lookup_samples

        self.use_global = self.ablation.global_volume
        self.use_guidance = self.use_global and self.ablation.global_guidance
        self.use_lookup = self.ablation.lookup_concat or not self.use_global

        volumes = int(self.use_global) + int(self.use_lookup)
        motion_in = 1 + volumes * channels * samples

        if self.use_guidance:
            self.guidance = GlobalGuidance(
                channels,
                latent_count,
                heads=config.guidance_heads,
                latent_position_encoding=config.latent_position_encoding,
            )
        self.motion = MotionEncoder(motion_in, config.motion_dim)
        self.hidden_init = nn.ModuleList(
            [nn.Conv2d(config.hidden_dim, config.hidden_dim, kernel_size=3, padding=1) for _ in range(3)]
        )
        self.update = SelectiveMultiLevelGRU(
            config.hidden_dim, config.motion_dim, config.small_kernel, config.large_kernel
        )
        self.disp_head = DispHead(config.hidden_dim, 2 * config.hidden_dim)
        self.mask_head = UpsampleMaskHead(config.hidden_dim, config.upsample_factor)

    def initial_state(self, context: ContextPyramid, init_disparity: torch.Tensor) -> IterationState:
        hidden = tuple(torch.tanh(conv(level)) for conv, level in zip(self.hidden_init, context.levels))
        return IterationState(disparity=init_disparity, hidden=hidden, iteration_index=0)

    def step(
        self,
        state: IterationState,
        lcv: LocalCostVolume,
        gcv: Optional[GlobalCostVolume],
        context: ContextPyramid,
        selection: tuple[torch.Tensor, ...],
    ) -> IterationState:
        """One refinement iteration at 1/4 resolution."""
        radius = self.config.lookup_radius
        disparity = state.disparity
        local = lookup_lcv(lcv.values, disparity, radius)

        enhanced = None
        if self.use_guidance:
            enhanced = global_guidance(self.guidance, local, gcv)
        elif self.use_global:
            enhanced = sample_global_volume(gcv, disparity, lcv.max_disparity, radius)

        motion = motion_encode(self.motion, enhanced, local if self.use_lookup else None, disparity)
        hidden = selective_gru_update(self.update, state.hidden, motion, context, selection)
        disparity = decode_residual(self.disp_head, hidden[0], disparity)
        return IterationState(disparity=disparity, hidden=hidden, iteration_index=state.iteration_index + 1)


def run_iterations(
    decoder: GuidedRefinement,
    context: ContextPyramid,
    lcv: LocalCostVolume,
    gcv: Optional[GlobalCostVolume],
    init_disparity: torch.Tensor,
    iters: int,
) -> list[torch.Tensor]:
    """Run ``iters`` refinement steps from d0.

    Args:
        decoder: Refinement weights.
        context: Left context pyramid.
        lcv: Local cost volume.
        gcv: Global cost volume, None when the global volume is off.
        init_disparity: d0 (B, 1, H/4, W/4).
        iters: Number of updates K >= 1.

    Returns:
        K full-resolution disparities (B, 1, H, W), one per update.

    Raises:
        ValidationError: If iters < 1 or a required global volume is missing.
    """
    if iters < 1:
        raise ValidationError(f"Invalid iteration count: {iters}. Must be >= 1.")
    if decoder.use_global and gcv is None:
        raise ValidationError("The decoder was built with the global volume but none was given")

    state = decoder.initial_state(context, init_disparity)
    selection = decoder.update.selection_maps(context)
    predictions = []
    for _ in range(iters):
        state = decoder.step(state, lcv, gcv, context, selection)
        instrumentation.emit("disparity", state.disparity)
        predictions.append(upsample_disparity(decoder.mask_head, state.disparity, state.hidden[0]))
    logger.debug(f"Ran {iters} refinement iterations")
    return predictions
