"""Evaluation metrics and reports."""

from granular_stereo.evaluation.metrics import bad_x, compute_metric, d1, epe, parse_metric_names
from granular_stereo.evaluation.report import (
    EvaluationReport,
    ImageResult,
    evaluate_model,
    evaluate_set,
    iteration_curve,
    region_mask,
)

__all__ = [
    "EvaluationReport",
    "ImageResult",
    "bad_x",
    "compute_metric",
    "d1",
    "epe",
    "evaluate_model",
    "evaluate_set",
    "iteration_curve",
    "parse_metric_names",
    "region_mask",
]
