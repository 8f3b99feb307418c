"""Tests for EPE, Bad-x and D1."""

import numpy as np
import pytest

from granular_stereo.core.types import DisparityMap
from granular_stereo.errors import EmptyMask, ShapeMismatch, ValidationError
from granular_stereo.evaluation.metrics import bad_x, compute_metric, d1, epe, parse_metric_names


def make_case(seed, size=(5, 7)):
    rng = np.random.default_rng(seed)
    gt = rng.uniform(0.5, 60.0, size=size)
    pred = gt + rng.normal(0.0, 4.0, size=size)
    mask = rng.random(size) < 0.7
    mask.flat[0] = True
    return pred, gt, mask


def oracle(pred, gt, mask, x):
    """Per-pixel loop definitions of EPE, Bad-x and D1."""
    errors, outliers, bad, count = 0.0, 0, 0, 0
    for p, g, m in zip(pred.flat, gt.flat, mask.flat):
        if not m:
            continue
        e = abs(p - g)
        count += 1
        errors += e
        bad += e > x
        outliers += e > 3.0 and e > 0.05 * g
    return errors / count, 100.0 * bad / count, 100.0 * outliers / count


class TestEpe:
    """Tests for epe."""

    def test_perfect(self):
        """pred = gt gives 0."""
        gt = np.full((2, 2), 4.0)
        assert epe(gt, gt, np.ones((2, 2), bool)) == 0.0

    def test_mean_error(self):
        """Errors (1, 3) average to 2."""
        pred = np.array([[1.0, 3.0]])
        assert epe(pred, np.zeros((1, 2)), np.ones((1, 2), bool)) == pytest.approx(2.0)

    def test_masked(self):
        """Masking out the 3-pixel error leaves 1."""
        pred = np.array([[1.0, 3.0]])
        assert epe(pred, np.zeros((1, 2)), np.array([[True, False]])) == pytest.approx(1.0)

    def test_disparity_maps(self):
        """DisparityMap inputs are accepted."""
        pred = DisparityMap(np.array([[2.0, 2.0]], np.float32))
        gt = DisparityMap(np.array([[1.0, 1.0]], np.float32))
        assert epe(pred, gt, np.ones((1, 2), bool)) == pytest.approx(1.0)

    def test_empty_mask(self):
        """An all-false mask raises EmptyMask."""
        with pytest.raises(EmptyMask):
            epe(np.zeros((2, 2)), np.zeros((2, 2)), np.zeros((2, 2), bool))

    def test_misaligned(self):
        """Grids must align."""
        with pytest.raises(ShapeMismatch):
            epe(np.zeros((2, 2)), np.zeros((2, 3)), np.ones((2, 3), bool))


class TestBadX:
    """Tests for bad_x."""

    ERRORS = np.array([[0.5, 1.5, 2.5, 3.5]])

    def test_zero_errors(self):
        """No error gives 0%."""
        assert bad_x(np.zeros((2, 2)), np.zeros((2, 2)), np.ones((2, 2), bool), 1.0) == 0.0

    def test_threshold_two(self):
        """Errors (0.5, 1.5, 2.5, 3.5) at x = 2 give 50%."""
        assert bad_x(self.ERRORS, np.zeros((1, 4)), np.ones((1, 4), bool), 2.0) == pytest.approx(50.0)

    def test_threshold_one(self):
        """The same errors at x = 1 give 75%."""
        assert bad_x(self.ERRORS, np.zeros((1, 4)), np.ones((1, 4), bool), 1.0) == pytest.approx(75.0)

    def test_strict_threshold(self):
        """An error equal to x is not counted."""
        assert bad_x(np.array([[2.0]]), np.zeros((1, 1)), np.ones((1, 1), bool), 2.0) == 0.0

    def test_non_positive_threshold(self):
        """x must be positive."""
        with pytest.raises(ValidationError):
            bad_x(np.zeros((1, 1)), np.zeros((1, 1)), np.ones((1, 1), bool), 0.0)

    @pytest.mark.parametrize("seed", range(10))
    def test_non_increasing_in_x(self, seed):
        """Bad-x never grows as x grows."""
        pred, gt, mask = make_case(seed)
        values = [bad_x(pred, gt, mask, x) for x in (0.5, 1.0, 2.0, 3.0, 5.0, 10.0)]
        assert values == sorted(values, reverse=True)


class TestD1:
    """Tests for d1."""

    def test_large_disparity_not_counted(self):
        """gt = 100 with error 4 is not an outlier (4 <= 5)."""
        assert d1(np.array([[104.0]]), np.array([[100.0]]), np.ones((1, 1), bool)) == 0.0

    def test_small_disparity_counted(self):
        """gt = 10 with error 4 is an outlier."""
        assert d1(np.array([[14.0]]), np.array([[10.0]]), np.ones((1, 1), bool)) == 100.0

    def test_zero_error(self):
        """No error gives 0%."""
        gt = np.full((3, 3), 7.0)
        assert d1(gt, gt, np.ones((3, 3), bool)) == 0.0

    @pytest.mark.parametrize("seed", range(10))
    def test_at_most_bad3(self, seed):
        """D1 never exceeds Bad-3."""
        pred, gt, mask = make_case(seed)
        assert d1(pred, gt, mask) <= bad_x(pred, gt, mask, 3.0)


class TestAgainstOracle:
    """Randomized comparison with per-pixel loop definitions."""

    @pytest.mark.parametrize("seed", range(100))
    def test_random_instances(self, seed):
        """Vectorized metrics match the loop definitions."""
        rng = np.random.default_rng(1000 + seed)
        pred, gt, mask = make_case(seed, size=tuple(int(v) for v in rng.integers(1, 9, size=2)))
        x = float(rng.choice([0.5, 1.0, 2.0, 3.0]))
        expected_epe, expected_bad, expected_d1 = oracle(pred, gt, mask, x)

        assert abs(epe(pred, gt, mask) - expected_epe) <= 1e-6
        assert abs(bad_x(pred, gt, mask, x) - expected_bad) <= 1e-6
        assert abs(d1(pred, gt, mask) - expected_d1) <= 1e-6

    @pytest.mark.parametrize("seed", range(5))
    def test_pixel_permutation_invariance(self, seed):
        """Permuting pixels of pred, gt and mask together changes nothing."""
        pred, gt, mask = make_case(seed)
        order = np.random.default_rng(seed).permutation(pred.size)
        shuffled = [a.flatten()[order].reshape(a.shape) for a in (pred, gt, mask)]
        for name in ("epe", "d1", "bad2"):
            assert compute_metric(name, *shuffled) == pytest.approx(compute_metric(name, pred, gt, mask))


class TestMetricNames:
    """Tests for parse_metric_names and compute_metric."""

    def test_parse(self):
        """Names are split, trimmed and lower-cased."""
        assert parse_metric_names("EPE, bad1,bad2.5 ,d1") == ["epe", "bad1", "bad2.5", "d1"]

    @pytest.mark.parametrize("spec", ["", " , ", "epe,rmse", "bad", "badx"])
    def test_rejects_unknown(self, spec):
        """Unknown or empty metric lists raise ValidationError."""
        with pytest.raises(ValidationError):
            parse_metric_names(spec)

    def test_compute_by_name(self):
        """bad<x> dispatches with the parsed threshold."""
        pred = np.array([[0.5, 1.5, 2.5, 3.5]])
        gt = np.zeros((1, 4))
        mask = np.ones((1, 4), bool)
        assert compute_metric("bad2", pred, gt, mask) == pytest.approx(50.0)
        assert compute_metric("bad1.0", pred, gt, mask) == pytest.approx(75.0)
        assert compute_metric("epe", pred, gt, mask) == pytest.approx(2.0)

    def test_compute_unknown(self):
        """Unknown names raise ValidationError."""
        with pytest.raises(ValidationError):
            compute_metric("rmse", np.zeros((1, 1)), np.zeros((1, 1)), np.ones((1, 1), bool))
