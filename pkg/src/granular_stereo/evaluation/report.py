"""Per-image evaluation, aggregate means and worst-first ranking."""

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from granular_stereo.core.types import DisparityMap, StereoSample
from granular_stereo.errors import MissingMask, ShapeMismatch, ValidationError
from granular_stereo.evaluation.metrics import compute_metric, epe
from granular_stereo.utils.fs_utils import safe_write
from granular_stereo.utils.templating import render_template

logger = logging.getLogger(__name__)

REGIONS = ("all", "noc")
REPORT_TEMPLATE = "report.txt.j2"


@dataclass
class ImageResult:
    """Metric values of one evaluated image; ``index`` is its 1-based position in the set."""
    index: int
    name: str
    metrics: dict[str, float]


@dataclass
class EvaluationReport:
    """Per-image table, aggregate means and ranking for one region.

    Attributes:
        region: "all" or "noc".
        metric_names: Metrics in report order.
        images: One result per evaluated image, in input order.
        rank_by: Metric used for the worst-first ranking.
    """
    region: str
    metric_names: list[str]
    images: list[ImageResult] = field(default_factory=list)
    rank_by: str = "epe"

    def aggregate(self) -> dict[str, float]:
        """Mean of each metric over the images."""
        return {
            name: float(np.mean([image.metrics[name] for image in self.images]))
            for name in self.metric_names
        }

    def ranking(self) -> list[ImageResult]:
        """Images ordered worst-first by ``rank_by``; ties keep input order."""
        return sorted(self.images, key=lambda image: -image.metrics[self.rank_by])

    def to_records(self) -> list[dict]:
        """One record per image and metric: name, metric, region, value."""
        return [
            {"name": image.name, "metric": metric, "region": self.region, "value": image.metrics[metric]}
            for image in self.images
            for metric in self.metric_names
        ]

    def render(self) -> str:
        """Plain-text table rendered through the report template."""
        return render_template(
            REPORT_TEMPLATE,
            {
                "region": self.region,
                "metric_names": self.metric_names,
                "images": self.images,
                "aggregate": self.aggregate(),
                "ranking": self.ranking(),
                "rank_by": self.rank_by,
            },
        )

    def write_records(self, path: Path) -> None:
        """Write line-delimited JSON records."""
        lines = [json.dumps(record, sort_keys=True) for record in self.to_records()]
        safe_write(Path(path), "\n".join(lines) + "\n")
        logger.info(f"Wrote {len(lines)} evaluation records to {path}")


def region_mask(sample: StereoSample, region: str) -> np.ndarray:
    """Pixels scored for ``region``.

    Raises:
        ValidationError: If the region is unknown.
        MissingMask: If the sample lacks ground truth, or region is noc without a noc mask.
    """
    if region not in REGIONS:
        raise ValidationError(f"Unknown region '{region}'. Use one of: {', '.join(REGIONS)}")
    if sample.gt_disparity is None:
        raise MissingMask(f"Sample '{sample.name}' has no ground-truth disparity")
    valid = sample.effective_valid_mask()
    if region == "all":
        return valid
    if sample.noc_mask is None:
        raise MissingMask(f"Sample '{sample.name}' has no noc mask; cannot evaluate region 'noc'")
    return sample.noc_mask & valid


def evaluate_set(
    predictions: Sequence[DisparityMap],
    samples: Sequence[StereoSample],
    metric_names: Sequence[str],
    region: str = "all",
    rank_by: Optional[str] = None,
) -> EvaluationReport:
    """Score predictions against their samples.

    Args:
        predictions: Full-resolution disparity per sample.
        samples: Samples with ground truth.
        metric_names: Report names (epe, d1, bad<x>).
        region: "all" or "noc".
        rank_by: Ranking metric; defaults to the first metric.

    Returns:
        EvaluationReport.

    Raises:
        MissingMask: If a requested region mask is absent.
        ShapeMismatch: If the prediction and sample counts differ.
        ValidationError: If there are no samples.
    """
    if not samples:
        raise ValidationError("Cannot evaluate an empty sample set")
    if len(predictions) != len(samples):
        raise ShapeMismatch(f"Got {len(predictions)} predictions for {len(samples)} samples")
    metric_names = list(metric_names)
    rank_by = rank_by or metric_names[0]
    if rank_by not in metric_names:
        raise ValidationError(f"Ranking metric '{rank_by}' is not among {metric_names}")

    masks = [region_mask(sample, region) for sample in samples]
    report = EvaluationReport(region=region, metric_names=metric_names, rank_by=rank_by)
    for index, (prediction, sample, mask) in enumerate(zip(predictions, samples, masks), start=1):
        values = {name: compute_metric(name, prediction, sample.gt_disparity, mask) for name in metric_names}
        report.images.append(ImageResult(index=index, name=sample.name, metrics=values))
        logger.debug(f"Evaluated {sample.name}: {values}")

    logger.info(f"Evaluated {len(samples)} images on region '{region}'")
    return report


def evaluate_model(
    model,
    samples: Sequence[StereoSample],
    metric_names: Sequence[str],
    region: str = "all",
    iters: Optional[int] = None,
) -> EvaluationReport:
    """Run the network on every sample, then score with ``evaluate_set``."""
    from granular_stereo.model import predict_disparity

    for sample in samples:
        region_mask(sample, region)
    predictions = [predict_disparity(model, sample.left, sample.right, iters) for sample in samples]
    return evaluate_set(predictions, samples, metric_names, region)


def iteration_curve(model, samples: Sequence[StereoSample], iters: int, region: str = "all") -> list[float]:
    """Mean EPE over the samples after each refinement step 1..iters."""
    from granular_stereo.model import predict_all_iterations

    if not samples:
        raise ValidationError("Cannot compute an iteration curve over an empty sample set")
    totals = np.zeros(iters, dtype=np.float64)
    for sample in samples:
        mask = region_mask(sample, region)
        per_step = predict_all_iterations(model, sample.left, sample.right, iters)
        totals += [epe(prediction, sample.gt_disparity, mask) for prediction in per_step]
    curve = (totals / len(samples)).tolist()
    logger.info(f"Iteration curve over {len(samples)} samples: {[round(v, 4) for v in curve]}")
    return curve
