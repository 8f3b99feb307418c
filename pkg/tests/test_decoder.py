"""Tests for the recurrent decoder: lookup, guidance, selective GRU and upsampling."""

import pytest
import torch

from granular_stereo.core.padding import pad_to_multiple
from granular_stereo.core.types import ContextPyramid, GlobalCostVolume, LocalCostVolume
from granular_stereo.decoder.gru import ConvGRU, SelectiveConvGRU, SelectiveMultiLevelGRU, selective_gru_update
from granular_stereo.decoder.guidance import GlobalGuidance, global_guidance, sample_global_volume
from granular_stereo.decoder.lookup import lookup_lcv, sample_volume
from granular_stereo.decoder.motion import MotionEncoder, motion_encode
from granular_stereo.decoder.refinement import DispHead, GuidedRefinement, decode_residual, run_iterations
from granular_stereo.decoder.upsample import bilinear_upsample, convex_upsample, convex_weights
from granular_stereo.errors import ShapeMismatch, ValidationError
from granular_stereo.instrumentation import capture
from granular_stereo.model import StereoModel
from tests.helpers import check_gradients, make_images, make_tiny_config, weighted_sum


def make_ramp_volume(depth=10, channels=1, height=1, width=1):
    """Volume whose value at bin z is 10·z."""
    ramp = 10.0 * torch.arange(depth, dtype=torch.float32)
    return ramp.view(1, 1, depth, 1, 1).expand(1, channels, depth, height, width).contiguous()


def make_context(batch=1, hidden=8, height=8, width=8, seed=0) -> ContextPyramid:
    generator = torch.Generator().manual_seed(seed)
    levels, gates = [], []
    for i in range(3):
        shape = (batch, hidden, height // 2**i, width // 2**i)
        levels.append(torch.randn(*shape, generator=generator))
        gates.append(tuple(torch.randn(*shape, generator=generator) for _ in range(3)))
    return ContextPyramid(tuple(levels), tuple(gates))


def make_volumes(batch=1, channels=8, disparities=8, latent=4, height=8, width=8, seed=0):
    generator = torch.Generator().manual_seed(seed)
    lcv = LocalCostVolume(torch.randn(batch, channels, disparities, height, width, generator=generator))
    gcv = GlobalCostVolume(torch.randn(batch, channels, latent, height, width, generator=generator))
    return lcv, gcv


def make_decoder(**ablation) -> GuidedRefinement:
    torch.manual_seed(0)
    config = make_tiny_config(**ablation)
    return GuidedRefinement(config.decoder, channels=8, latent_count=4, ablation=config.ablation)


class TestLookup:
    """Tests for volume sampling around the current disparity."""

    def test_integer_disparity(self):
        """d = 5 with r = 1 samples bins 4, 5 and 6."""
        out = lookup_lcv(make_ramp_volume(), torch.full((1, 1, 1, 1), 5.0), radius=1)
        assert out.flatten().tolist() == pytest.approx([40.0, 50.0, 60.0])

    def test_fractional_disparity(self):
        """d = 5.5 interpolates linearly between bins."""
        out = lookup_lcv(make_ramp_volume(), torch.full((1, 1, 1, 1), 5.5), radius=1)
        assert out.flatten().tolist() == pytest.approx([45.0, 55.0, 65.0])

    def test_negative_disparity_clamps_to_first_bin(self):
        """Positions below zero take bin 0."""
        out = lookup_lcv(make_ramp_volume(), torch.full((1, 1, 1, 1), -3.0), radius=1)
        assert out.flatten().tolist() == pytest.approx([0.0, 0.0, 0.0])

    def test_upper_boundary(self):
        """Positions past D - 1 take the last bin."""
        out = lookup_lcv(make_ramp_volume(depth=10), torch.full((1, 1, 1, 1), 9.0), radius=2)
        assert out.flatten().tolist() == pytest.approx([70.0, 80.0, 90.0, 90.0, 90.0])

    @pytest.mark.parametrize("seed", range(100))
    def test_matches_per_pixel_oracle(self, seed):
        """Batched sampling equals the scalar definition at every pixel within 1e-6."""
        generator = torch.Generator().manual_seed(seed)
        depth = 2 + seed % 7
        radius = seed % 3
        volume = torch.randn(2, 3, depth, 2, 3, generator=generator, dtype=torch.float64)
        disparity = torch.rand(2, 1, 2, 3, generator=generator, dtype=torch.float64) * (depth + 2) - 1
        out = lookup_lcv(volume, disparity, radius=radius)
        assert out.shape == (2, 3, 2 * radius + 1, 2, 3)

        top = depth - 1
        for b in range(2):
            for y in range(2):
                for x in range(3):
                    for k, offset in enumerate(range(-radius, radius + 1)):
                        p = min(max(disparity[b, 0, y, x].item() + offset, 0.0), float(top))
                        lo = int(p)
                        hi = min(lo + 1, top)
                        expected = volume[b, :, lo, y, x] * (1 - (p - lo)) + volume[b, :, hi, y, x] * (p - lo)
                        assert (out[b, :, k, y, x] - expected).abs().max() <= 1e-6

    def test_nan_positions_stay_nan(self):
        """A NaN disparity yields NaN samples instead of an index error."""
        out = sample_volume(make_ramp_volume(), torch.full((1, 1, 1, 1), float("nan")))
        assert torch.isnan(out).all()

    def test_position_shape_mismatch(self):
        """Positions must match the volume grid."""
        with pytest.raises(ShapeMismatch):
            sample_volume(torch.zeros(1, 1, 4, 2, 2), torch.zeros(1, 3, 2, 3))


class TestGlobalGuidance:
    """Tests for the lookup-to-latent cross-attention."""

    def test_shape(self):
        """The enhanced lookup has the lookup's shape."""
        guidance = GlobalGuidance(channels=8, latent_count=4, heads=2)
        lcv, gcv = make_volumes(batch=2, height=3, width=5)
        lookup = lookup_lcv(lcv.values, torch.full((2, 1, 3, 5), 2.0), radius=1)
        assert global_guidance(guidance, lookup, gcv).shape == lookup.shape

    def test_single_latent(self):
        """With L = 1 every lookup token attends to the same value."""
        guidance = GlobalGuidance(channels=8, latent_count=1, heads=1)
        lookup = torch.randn(1, 8, 3, 2, 2)
        gcv = GlobalCostVolume(torch.randn(1, 8, 1, 2, 2))
        out = global_guidance(guidance, lookup, gcv)
        torch.testing.assert_close(out[:, :, 0], out[:, :, 1])
        torch.testing.assert_close(out[:, :, 1], out[:, :, 2])

    def test_latent_order_irrelevant_without_position_encoding(self):
        """Without latent position encoding, permuting latents leaves the output unchanged."""
        guidance = GlobalGuidance(channels=8, latent_count=4, heads=2, latent_position_encoding=False)
        lookup = torch.randn(1, 8, 3, 2, 2)
        gcv = torch.randn(1, 8, 4, 2, 2)
        permuted = gcv[:, :, torch.tensor([2, 0, 3, 1])]
        torch.testing.assert_close(
            global_guidance(guidance, lookup, GlobalCostVolume(gcv)),
            global_guidance(guidance, lookup, GlobalCostVolume(permuted)),
        )

    def test_misaligned_volume(self):
        """Lookup and global volume must share batch, channels and grid."""
        guidance = GlobalGuidance(channels=8, latent_count=4)
        with pytest.raises(ShapeMismatch):
            global_guidance(guidance, torch.randn(1, 8, 3, 2, 2), GlobalCostVolume(torch.randn(1, 8, 4, 2, 3)))

    def test_sample_global_volume_maps_disparity_to_latent_axis(self):
        """Disparity D - 1 samples the last latent."""
        gcv = GlobalCostVolume(make_ramp_volume(depth=4))
        out = sample_global_volume(gcv, torch.full((1, 1, 1, 1), 7.0), max_disparity=8, radius=0)
        assert out.item() == pytest.approx(30.0)


class TestMotionEncoder:
    """Tests for the motion encoder."""

    def test_output_shape(self):
        """m_k has motion_dim channels at the input grid."""
        encoder = MotionEncoder(in_channels=1 + 2 * 4 * 3, motion_dim=6)
        volume = torch.randn(1, 4, 3, 5, 7)
        out = motion_encode(encoder, volume, volume, torch.zeros(1, 1, 5, 7))
        assert out.shape == (1, 6, 5, 7)
        assert (out >= 0).all()

    def test_gradient_reaches_every_input(self):
        """Backpropagation gives non-zero gradients on the enhanced volume, the lookup and the disparity."""
        torch.manual_seed(0)
        encoder = MotionEncoder(in_channels=1 + 2 * 4 * 3, motion_dim=6)
        enhanced = torch.randn(1, 4, 3, 5, 7, requires_grad=True)
        lookup = torch.randn(1, 4, 3, 5, 7, requires_grad=True)
        disparity = torch.rand(1, 1, 5, 7).mul(4).requires_grad_()

        motion_encode(encoder, enhanced, lookup, disparity).sum().backward()

        for tensor in (enhanced, lookup, disparity):
            assert tensor.grad is not None
            assert torch.count_nonzero(tensor.grad) > 0

    def test_misaligned_inputs(self):
        """Inputs on different grids raise ShapeMismatch."""
        encoder = MotionEncoder(in_channels=1 + 4 * 3, motion_dim=6)
        with pytest.raises(ShapeMismatch):
            motion_encode(encoder, None, torch.randn(1, 4, 3, 4, 4), torch.zeros(1, 1, 8, 8))


class TestSelectiveGRU:
    """Tests for the gated recurrent units."""

    @staticmethod
    def force_update_gate(gru: ConvGRU, value: float):
        with torch.no_grad():
            gru.convz.weight.zero_()
            gru.convz.bias.fill_(value)

    def test_closed_update_gate_keeps_hidden(self):
        """With z = 0 the hidden state passes through unchanged."""
        gru = ConvGRU(hidden_dim=4, input_dim=3)
        self.force_update_gate(gru, -1e4)
        h = torch.randn(1, 4, 5, 5)
        zeros = torch.zeros(1, 4, 5, 5)
        out = gru(h, zeros, zeros, zeros, torch.randn(1, 3, 5, 5))
        torch.testing.assert_close(out, h)

    def test_open_update_gate_takes_candidate(self):
        """With z = 1 the output is the candidate state."""
        gru = ConvGRU(hidden_dim=4, input_dim=3)
        self.force_update_gate(gru, 1e4)
        h = torch.randn(1, 4, 5, 5)
        x = torch.randn(1, 3, 5, 5)
        zeros = torch.zeros(1, 4, 5, 5)

        out = gru(h, zeros, zeros, zeros, x)

        r = torch.sigmoid(gru.convr(torch.cat([h, x], dim=1)))
        q = torch.tanh(gru.convq(torch.cat([r * h, x], dim=1)))
        torch.testing.assert_close(out, q)

    @pytest.mark.parametrize("att,branch", [(1.0, "small_gru"), (0.0, "large_gru")])
    def test_selection_picks_branch(self, att, branch):
        """A = 1 selects the small-kernel unit and A = 0 the large-kernel one."""
        gru = SelectiveConvGRU(hidden_dim=4, input_dim=3, small_kernel_size=3, large_kernel_size=5)
        h = torch.randn(1, 4, 6, 6)
        x = torch.randn(1, 3, 6, 6)
        gates = tuple(torch.randn(1, 4, 6, 6) for _ in range(3))

        out = gru(torch.full((1, 1, 6, 6), att), h, gates, x)

        torch.testing.assert_close(out, getattr(gru, branch)(h, *gates, x))

    def test_gate_ranges(self):
        """Captured gates lie in [0, 1] and hidden states in [-1, 1]."""
        gru = SelectiveMultiLevelGRU(hidden_dim=8, motion_dim=6, small_kernel=3, large_kernel=5)
        context = make_context()
        hidden = tuple(torch.tanh(level) for level in context.levels)

        with capture("gate_z", "gate_r", "gate_a", "hidden") as captured:
            selection = gru.selection_maps(context)
            selective_gru_update(gru, hidden, torch.randn(1, 6, 8, 8), context, selection)

        assert len(captured.tensors["gate_a"]) == 3
        assert len(captured.tensors["gate_z"]) == 6
        for name in ("gate_z", "gate_r", "gate_a"):
            for gate in captured.tensors[name]:
                assert gate.min() >= 0 and gate.max() <= 1
        for state in captured.tensors["hidden"]:
            assert state.abs().max() <= 1

    def test_motion_resolution_mismatch(self):
        """The motion feature must sit at the 1/4 hidden resolution."""
        gru = SelectiveMultiLevelGRU(hidden_dim=8, motion_dim=6, small_kernel=3, large_kernel=5)
        context = make_context()
        hidden = tuple(context.levels)
        with pytest.raises(ShapeMismatch):
            selective_gru_update(gru, hidden, torch.randn(1, 6, 4, 4), context, gru.selection_maps(context))


class TestUpsample:
    """Tests for convex and bilinear upsampling."""

    def test_constant_map(self):
        """A constant c upsamples to 4c whatever the mask."""
        disparity = torch.full((2, 1, 3, 5), 2.5)
        out = convex_upsample(disparity, torch.randn(2, 9 * 16, 3, 5), factor=4)
        assert out.shape == (2, 1, 12, 20)
        torch.testing.assert_close(out, torch.full_like(out, 10.0))

    def test_center_mask_is_nearest(self):
        """A mask peaked on the centre neighbour gives nearest upsampling times 4."""
        disparity = torch.arange(6, dtype=torch.float32).view(1, 1, 2, 3)
        mask = torch.full((1, 9 * 16, 2, 3), -100.0)
        mask[:, 4 * 16:5 * 16] = 100.0

        out = convex_upsample(disparity, mask, factor=4)

        expected = 4 * disparity.repeat_interleave(4, dim=2).repeat_interleave(4, dim=3)
        torch.testing.assert_close(out, expected)

    def test_weights_sum_to_one(self):
        """Convex weights form a partition of unity."""
        weights = convex_weights(torch.randn(2, 9 * 16, 3, 4), 4)
        torch.testing.assert_close(weights.sum(dim=2), torch.ones(2, 1, 4, 4, 3, 4))
        assert (weights >= 0).all()

    def test_bilinear_rescales_values(self):
        """Bilinear upsampling multiplies values by the factor."""
        out = bilinear_upsample(torch.full((1, 1, 2, 2), 3.0), 4)
        assert out.shape == (1, 1, 8, 8)
        torch.testing.assert_close(out, torch.full_like(out, 12.0))


class TestRefinement:
    """Tests for the refinement loop."""

    def test_decode_residual_clamps_at_zero(self):
        """Negative updates never push the disparity below zero."""
        head = DispHead(4, 8)
        with torch.no_grad():
            head.conv2.weight.zero_()
            head.conv2.bias.fill_(-10.0)
        out = decode_residual(head, torch.randn(1, 4, 3, 3), torch.full((1, 1, 3, 3), 3.0))
        assert (out == 0).all()

    @pytest.mark.parametrize(
        "ablation",
        [{}, {"global_guidance": False}, {"global_volume": False}, {"lookup_concat": False}],
    )
    def test_one_prediction_per_iteration(self, ablation):
        """K iterations give K full-resolution maps."""
        decoder = make_decoder(**ablation)
        lcv, gcv = make_volumes()
        predictions = run_iterations(
            decoder, make_context(), lcv, gcv if decoder.use_global else None, torch.full((1, 1, 8, 8), 2.0), 3
        )
        assert len(predictions) == 3
        assert all(p.shape == (1, 1, 32, 32) for p in predictions)
        assert all((p >= 0).all() for p in predictions)

    def test_zero_update_keeps_disparity(self):
        """A zeroed residual head leaves d0 unchanged at every step."""
        decoder = make_decoder()
        with torch.no_grad():
            decoder.disp_head.conv2.weight.zero_()
            decoder.disp_head.conv2.bias.zero_()
        lcv, gcv = make_volumes()
        init = torch.rand(1, 1, 8, 8) * 5

        with capture("disparity") as captured:
            predictions = run_iterations(decoder, make_context(), lcv, gcv, init, 3)

        assert len(captured.tensors["disparity"]) == 3
        for state in captured.tensors["disparity"]:
            torch.testing.assert_close(state, init)
        assert predictions[0].shape == (1, 1, 32, 32)

    def test_invalid_iteration_count(self):
        """At least one iteration is required."""
        decoder = make_decoder()
        lcv, gcv = make_volumes()
        with pytest.raises(ValidationError):
            run_iterations(decoder, make_context(), lcv, gcv, torch.zeros(1, 1, 8, 8), 0)

    def test_missing_global_volume(self):
        """A decoder built with the global volume needs one."""
        decoder = make_decoder()
        lcv, _ = make_volumes()
        with pytest.raises(ValidationError):
            run_iterations(decoder, make_context(), lcv, None, torch.zeros(1, 1, 8, 8), 1)

    def test_without_lookup_concat_uses_only_guidance(self):
        """Dropping the lookup concat shrinks the motion encoder input."""
        with_lookup = make_decoder()
        without = make_decoder(lookup_concat=False)
        assert with_lookup.motion.conv1.in_channels == 1 + 2 * 8 * 3
        assert without.motion.conv1.in_channels == 1 + 8 * 3


class TestEndToEndGradients:
    """Gradient check through the whole network."""

    def test_tiny_model(self):
        """Analytic gradients of the full network agree with central differences."""
        torch.manual_seed(0)
        model = StereoModel(make_tiny_config()).double()
        left, right = make_images(height=16, width=32, dtype=torch.float64)
        left, _ = pad_to_multiple(left, 32)
        right, _ = pad_to_multiple(right, 32)

        def objective():
            out = model(left, right, iters=2)
            return weighted_sum([out.init_upsampled, *out.predictions], seed=1)

        assert check_gradients(model, objective, count=10) == []

    def test_ablated_model_shapes(self):
        """The plain encoder without the global volume still predicts at full resolution."""
        config = make_tiny_config(multi_granularity=False, global_volume=False)
        model = StereoModel(config).eval()
        left, right = make_images(height=32, width=64)
        with torch.no_grad():
            out = model(left, right, iters=2)
        assert out.matching.gcv is None
        assert out.final.shape == (1, 1, 32, 64)
