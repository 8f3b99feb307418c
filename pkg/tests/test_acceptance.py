"""Training-scale experiments on synthetic scenes.

These take minutes to hours and are deselected by default; run them with
``pytest -m slow``.
"""

from dataclasses import replace

import numpy as np
import pytest
import torch

from granular_stereo.config.model import ModelConfig, TrainConfig
from granular_stereo.core.types import StereoSample
from granular_stereo.data.dataset import StereoDataset, generate_dataset
from granular_stereo.evaluation.report import evaluate_model, evaluate_set, iteration_curve
from granular_stereo.model import StereoModel, predict_disparity
from granular_stereo.training.ablation import apply_ablation
from granular_stereo.training.trainer import train

pytestmark = pytest.mark.slow

HEIGHT, WIDTH = 64, 128
MAX_DISPARITY = 24.0


def desk_config() -> ModelConfig:
    """Desk model: embed_dim 64, 16 latent tokens, 8 refinement iterations."""
    config = ModelConfig()
    return replace(config, decoder=replace(config.decoder, train_iters=8, eval_iters=8))


def make_set(root, seed, count=20):
    generate_dataset(root, count=count, height=HEIGHT, width=WIDTH, max_disparity=MAX_DISPARITY, seed=seed)
    return StereoDataset(root)


def upscale(sample: StereoSample) -> StereoSample:
    """Twice the resolution by pixel repetition; disparities double."""
    def repeat(grid):
        return np.repeat(np.repeat(grid, 2, axis=-2), 2, axis=-1)

    return StereoSample(
        left=repeat(sample.left),
        right=repeat(sample.right),
        gt_disparity=repeat(sample.gt_disparity) * 2,
        valid_mask=repeat(sample.effective_valid_mask()),
        noc_mask=None if sample.noc_mask is None else repeat(sample.noc_mask),
        name=f"{sample.name}@2x",
    )


@pytest.fixture(scope="module")
def overfit_set(tmp_path_factory):
    return make_set(tmp_path_factory.mktemp("overfit"), seed=0)


@pytest.fixture(scope="module")
def held_out_set(tmp_path_factory):
    return make_set(tmp_path_factory.mktemp("held_out"), seed=1)


@pytest.fixture(scope="module")
def overfit_model(overfit_set, tmp_path_factory):
    torch.manual_seed(0)
    model = StereoModel(desk_config())
    config = TrainConfig(steps=3000, batch_size=2, peak_lr=4e-4, checkpoint_every=0)
    train(model, overfit_set, config, tmp_path_factory.mktemp("run") / "model.ckpt")
    return model.eval()


class TestOverfit:
    """A desk model memorizes a small synthetic set."""

    def test_training_set_error(self, overfit_model, overfit_set):
        """Training-set EPE below 0.5 px and Bad-2 below 3%."""
        report = evaluate_model(overfit_model, overfit_set.samples(), ["epe", "bad2"])
        means = report.aggregate()
        assert means["epe"] < 0.5
        assert means["bad2"] < 3.0


class TestIterationConvergence:
    """More refinement steps never make the estimate worse on held-out scenes."""

    def test_iteration_curve(self, overfit_model, held_out_set):
        curve = iteration_curve(overfit_model, held_out_set.samples(), iters=16)
        assert len(curve) == 16
        assert curve[7] <= curve[1]
        assert abs(curve[15] - curve[7]) <= 0.05 * curve[7]


class TestResolution:
    """The trained model runs at resolutions it was not trained on."""

    @pytest.mark.parametrize("height,width", [(32, 64), (64, 128), (128, 256)])
    def test_pyramid_scales(self, overfit_model, height, width):
        left = torch.rand(1, 3, height, width)
        right = torch.rand(1, 3, height, width)
        with torch.no_grad():
            output = overfit_model(left, right, iters=2)

        expected = [(height // 2 ** (i + 2), width // 2 ** (i + 2)) for i in range(4)]
        assert output.features.shapes() == expected
        assert output.final.shape == (1, 1, height, width)
        assert torch.isfinite(output.final).all()

    def test_double_resolution_error(self, overfit_model, overfit_set):
        """EPE on 2x scenes stays finite and within 3x the training-resolution EPE."""
        samples = overfit_set.samples()[:5]
        base = evaluate_model(overfit_model, samples, ["epe"]).aggregate()["epe"]

        scaled = [upscale(sample) for sample in samples]
        predictions = [predict_disparity(overfit_model, s.left, s.right) for s in scaled]
        doubled = evaluate_set(predictions, scaled, ["epe"]).aggregate()["epe"]

        assert np.isfinite(doubled)
        assert doubled < 3 * base


class TestAblationHarness:
    """Each primary component contributes to the fit."""

    STEPS = 500

    def final_loss(self, flags, dataset, tmp_path):
        config = apply_ablation(desk_config(), flags)
        torch.manual_seed(0)
        model = StereoModel(config)
        train_config = TrainConfig(steps=self.STEPS, batch_size=2, peak_lr=4e-4, checkpoint_every=0, log_every=50)
        result = train(model, dataset, train_config, tmp_path / "model.ckpt")
        assert len(result.losses) == self.STEPS
        return float(np.mean(result.losses[-50:]))

    def test_full_model_fits_best(self, overfit_set, tmp_path):
        full = self.final_loss({}, overfit_set, tmp_path / "full")
        for flag in ("mgfn", "lgcv", "lgru"):
            ablated = self.final_loss({flag: False}, overfit_set, tmp_path / flag)
            assert full <= ablated, f"without {flag}: {ablated:.4f} < full {full:.4f}"
