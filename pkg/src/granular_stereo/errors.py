"""Custom exception classes for Granular Stereo.

Every error carries an ``exit_code`` used by the command-line entry point.
"""

import logging

logger = logging.getLogger(__name__)


class StereoError(Exception):
    """Base exception for all Granular Stereo errors."""

    exit_code = 1


class ValidationError(StereoError):
    """Raised when a configuration, flag or argument fails validation."""

    exit_code = 2


class ConfigError(ValidationError):
    """Raised when a configuration file cannot be parsed."""
    pass


class UnknownFlag(ValidationError):
    """Raised when an ablation flag name is not recognised."""
    pass


class CropTooLarge(ValidationError):
    """Raised when a crop window exceeds the sample size."""
    pass


class StepOutOfRange(ValidationError):
    """Raised when a schedule is queried outside ``[0, total_steps]``."""
    pass


class DataIOError(StereoError):
    """Raised when a file or directory cannot be read or written."""

    exit_code = 3


class CheckpointVersionError(StereoError):
    """Raised when a checkpoint was written with an unsupported format version."""

    exit_code = 4


class ShapeError(StereoError):
    """Base class for shape and format errors surfaced from the pipeline."""

    exit_code = 5


class ShapeMismatch(ShapeError):
    pass


class InvalidDisparity(ShapeError):
    pass


class MaskInconsistency(ShapeError):
    pass


class RecordMismatch(ShapeError):
    pass


class ImageTooSmall(ShapeError):
    pass


class BadTapLayer(ShapeError):
    pass


class InconsistentTokenDims(ShapeError):
    pass


class ScaleMismatch(ShapeError):
    pass


class GroupMismatch(ShapeError):
    pass


class EmptyMask(ShapeError):
    pass


class NonFinite(ShapeError):
    pass


class MissingMask(ShapeError):
    pass


class BadHeader(ShapeError):
    pass


class TruncatedFile(ShapeError):
    pass


class BadBitDepth(ShapeError):
    pass


class NonFiniteLoss(StereoError):
    """Raised when training produces a NaN or infinite loss."""

    exit_code = 5
