"""Tests for the core data model, padding and sample validation."""

import itertools
from fractions import Fraction

import numpy as np
import pytest
import torch

from granular_stereo.core.padding import PaddingRecord, crop_to_original, pad_to_multiple
from granular_stereo.core.types import (
    DisparityMap,
    FeaturePyramid,
    LatentCostSequence,
    StereoSample,
)
from granular_stereo.core.validation import validate_sample
from granular_stereo.errors import (
    InvalidDisparity,
    MaskInconsistency,
    RecordMismatch,
    ScaleMismatch,
    ShapeError,
    ShapeMismatch,
    ValidationError,
)


def make_pair(height=8, width=8, seed=0):
    rng = np.random.default_rng(seed)
    left = rng.random((3, height, width)).astype(np.float32)
    right = rng.random((3, height, width)).astype(np.float32)
    return left, right


class TestPadding:
    """Tests for pad_to_multiple and crop_to_original."""

    def test_pad_100x200(self):
        """100x200 pads to 128x224 on the bottom and right."""
        image = np.zeros((3, 100, 200), dtype=np.float32)
        padded, record = pad_to_multiple(image, 32)
        assert padded.shape == (3, 128, 224)
        assert (record.bottom, record.right) == (28, 24)
        assert (record.top, record.left) == (0, 0)

    def test_already_multiple(self):
        """A 64x64 grid is returned unchanged."""
        image = np.ones((3, 64, 64), dtype=np.float32)
        padded, record = pad_to_multiple(image, 32)
        assert padded is image
        assert record.is_identity

    def test_single_pixel(self):
        """1x1 pads to one full tile."""
        padded, record = pad_to_multiple(np.full((1, 1), 7.0), 32)
        assert padded.shape == (32, 32)
        assert (padded == 7.0).all()
        assert record.padded_height == record.padded_width == 32

    def test_replicates_edges(self):
        """Padding copies the last row and column."""
        image = torch.arange(6, dtype=torch.float32).reshape(1, 1, 2, 3)
        padded, _ = pad_to_multiple(image, 4)
        assert torch.equal(padded[0, 0, :2, 3], image[0, 0, :, 2])
        assert torch.equal(padded[0, 0, 3, :3], image[0, 0, 1])

    def test_tensor_and_array_agree(self):
        """Tensor and array inputs pad identically."""
        array = np.random.default_rng(1).random((2, 3, 5, 7)).astype(np.float32)
        padded_np, record_np = pad_to_multiple(array, 4)
        padded_t, record_t = pad_to_multiple(torch.from_numpy(array), 4)
        assert record_np == record_t
        np.testing.assert_array_equal(padded_np, padded_t.numpy())

    @pytest.mark.parametrize("height,width", [(1, 1), (5, 7), (31, 33), (64, 64), (100, 200)])
    def test_pad_then_crop_is_identity(self, height, width):
        """crop_to_original undoes pad_to_multiple."""
        grid = np.random.default_rng(height * width).random((3, height, width))
        padded, record = pad_to_multiple(grid, 32)
        assert padded.shape[-2] % 32 == 0 and padded.shape[-1] % 32 == 0
        np.testing.assert_array_equal(crop_to_original(padded, record), grid)

    def test_pad_then_crop_over_random_sizes(self):
        """Fifty random sizes in [1, 257] pad to the minimal multiple of 32 and crop back exactly."""
        rng = np.random.default_rng(0)
        for height, width in rng.integers(1, 258, size=(50, 2)):
            grid = rng.random((int(height), int(width)))
            padded, record = pad_to_multiple(grid, 32)

            assert padded.shape == (-(-height // 32) * 32, -(-width // 32) * 32), (height, width)
            assert record.bottom < 32 and record.right < 32
            np.testing.assert_array_equal(crop_to_original(padded, record), grid)

    def test_identity_record_crop(self):
        """A zero-padding record crops nothing."""
        grid = np.ones((4, 4))
        np.testing.assert_array_equal(crop_to_original(grid, PaddingRecord(4, 4)), grid)

    def test_record_mismatch(self):
        """Cropping a grid of another size raises RecordMismatch."""
        _, record = pad_to_multiple(np.zeros((10, 10)), 32)
        with pytest.raises(RecordMismatch):
            crop_to_original(np.zeros((64, 64)), record)

    def test_invalid_multiple(self):
        """A multiple below 1 is rejected."""
        with pytest.raises(ValidationError):
            pad_to_multiple(np.zeros((4, 4)), 0)


class TestValidateSample:
    """Tests for validate_sample."""

    def test_identical_pair_without_gt(self):
        """A pair without ground truth is returned unchanged."""
        left, _ = make_pair()
        sample = StereoSample(left=left, right=left.copy())
        assert validate_sample(sample) is sample

    def test_view_size_mismatch(self):
        """Views of different sizes raise ShapeMismatch."""
        left = np.zeros((3, 8, 8), dtype=np.float32)
        right = np.zeros((3, 8, 10), dtype=np.float32)
        with pytest.raises(ShapeMismatch):
            validate_sample(StereoSample(left=left, right=right))

    def test_not_three_channels(self):
        """Views must be (3, H, W)."""
        image = np.zeros((1, 8, 8), dtype=np.float32)
        with pytest.raises(ShapeMismatch):
            validate_sample(StereoSample(left=image, right=image))

    def test_negative_gt_under_mask(self):
        """Negative disparity under the valid mask raises InvalidDisparity."""
        left, right = make_pair()
        gt = np.zeros((8, 8), dtype=np.float32)
        gt[2, 3] = -1.0
        with pytest.raises(InvalidDisparity):
            validate_sample(StereoSample(left=left, right=right, gt_disparity=gt))

    def test_negative_gt_outside_mask_ok(self):
        """Values outside the valid mask are not checked."""
        left, right = make_pair()
        gt = np.zeros((8, 8), dtype=np.float32)
        gt[2, 3] = np.nan
        valid = np.ones((8, 8), dtype=bool)
        valid[2, 3] = False
        validate_sample(StereoSample(left=left, right=right, gt_disparity=gt, valid_mask=valid))

    def test_noc_outside_valid(self):
        """A non-occluded pixel outside the valid mask raises MaskInconsistency."""
        left, right = make_pair()
        valid = np.ones((8, 8), dtype=bool)
        valid[0, 0] = False
        noc = np.ones((8, 8), dtype=bool)
        sample = StereoSample(
            left=left, right=right, gt_disparity=np.zeros((8, 8), np.float32), valid_mask=valid, noc_mask=noc
        )
        with pytest.raises(MaskInconsistency):
            validate_sample(sample)

    def test_mask_shape_mismatch(self):
        """Masks must match the view grid."""
        left, right = make_pair()
        with pytest.raises(ShapeMismatch, match="valid_mask"):
            validate_sample(StereoSample(left=left, right=right, valid_mask=np.ones((4, 4), bool)))

    def test_exhaustive_small_cases(self):
        """Exactly the samples meeting every invariant are accepted on a 1x2 grid."""
        left, right = make_pair(1, 2)
        gts = [None, np.array([[0.0, 1.0]], np.float32), np.array([[-1.0, 1.0]], np.float32)]
        masks = [None] + [np.array([bits], dtype=bool) for bits in itertools.product([False, True], repeat=2)]

        for gt, valid, noc in itertools.product(gts, masks, masks):
            sample = StereoSample(left=left, right=right, gt_disparity=gt, valid_mask=valid, noc_mask=noc)
            region = valid if valid is not None else np.ones((1, 2), bool)
            expected_ok = True
            if gt is not None and (gt[region] < 0).any():
                expected_ok = False
            if noc is not None and (noc & ~region).any():
                expected_ok = False

            if expected_ok:
                assert validate_sample(sample) is sample
            else:
                with pytest.raises(ShapeError):
                    validate_sample(sample)


class TestTypes:
    """Tests for the frozen data types."""

    def test_disparity_map_rejects_non_finite(self):
        """DisparityMap values must be finite."""
        with pytest.raises(ShapeMismatch):
            DisparityMap(np.array([[1.0, np.inf]], dtype=np.float32))

    def test_disparity_map_rejects_3d(self):
        """DisparityMap is a 2-D grid."""
        with pytest.raises(ShapeMismatch):
            DisparityMap(np.zeros((1, 2, 2), dtype=np.float32))

    def test_disparity_map_from_tensor(self):
        """from_tensor accepts batched single-channel tensors."""
        disparity = DisparityMap.from_tensor(torch.ones(1, 1, 3, 4), Fraction(1, 4))
        assert disparity.values.shape == (3, 4)
        assert disparity.resolution_scale == Fraction(1, 4)

    def test_pyramid_must_halve(self):
        """Pyramid levels must halve exactly."""
        levels = tuple(torch.zeros(1, 2, 16 // 2**i, 16 // 2**i) for i in range(4))
        FeaturePyramid(levels)
        bad = levels[:3] + (torch.zeros(1, 2, 3, 3),)
        with pytest.raises(ScaleMismatch):
            FeaturePyramid(bad)

    def test_pyramid_needs_four_levels(self):
        """Three levels are not a pyramid."""
        with pytest.raises(ShapeMismatch):
            FeaturePyramid(tuple(torch.zeros(1, 2, 8, 8) for _ in range(3)))

    def test_latent_sequence_extent(self):
        """Latent tokens must match batch·height·width."""
        LatentCostSequence(torch.zeros(2 * 3 * 4, 5, 6), batch=2, height=3, width=4)
        with pytest.raises(ShapeMismatch):
            LatentCostSequence(torch.zeros(10, 5, 6), batch=2, height=3, width=4)

    def test_effective_valid_mask_defaults_to_finite(self):
        """Without a valid mask, finite ground-truth pixels are valid."""
        left, right = make_pair(1, 2)
        gt = np.array([[1.0, np.nan]], np.float32)
        sample = StereoSample(left=left, right=right, gt_disparity=gt)
        np.testing.assert_array_equal(sample.effective_valid_mask(), [[True, False]])
