"""Configuration management for Granular Stereo."""

import logging

from granular_stereo.config.io import load_config, parse_config_text, save_config
from granular_stereo.config.model import (
    AblationConfig,
    DecoderConfig,
    EncoderConfig,
    LossConfig,
    MatchingConfig,
    ModelConfig,
    TrainConfig,
)
from granular_stereo.config.validation import validate_model_config, validate_train_config

logger = logging.getLogger(__name__)

__all__ = [
    "AblationConfig",
    "DecoderConfig",
    "EncoderConfig",
    "LossConfig",
    "MatchingConfig",
    "ModelConfig",
    "TrainConfig",
    "load_config",
    "parse_config_text",
    "save_config",
    "validate_model_config",
    "validate_train_config",
]
