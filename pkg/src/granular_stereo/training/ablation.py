"""Ablation flags and the model variants they select."""

import logging
from dataclasses import fields, replace
from typing import Mapping

from granular_stereo.config.model import AblationConfig, ModelConfig
from granular_stereo.config.validation import validate_model_config
from granular_stereo.errors import UnknownFlag

logger = logging.getLogger(__name__)

# Component names used in ablation tables, mapped to the toggle they drive.
PRIMARY_FLAGS = {
    "mgfn": "multi_granularity",
    "lgcv": "global_volume",
    "lgru": "global_guidance",
}


def resolve_flag(name: str) -> str:
    """AblationConfig field for a primary or fine-grained flag name.

    Raises:
        UnknownFlag: If the name matches neither.
    """
    key = name.strip().lower().replace("-", "_")
    if key in PRIMARY_FLAGS:
        return PRIMARY_FLAGS[key]
    if key in {f.name for f in fields(AblationConfig)}:
        return key
    known = sorted(PRIMARY_FLAGS) + sorted(f.name for f in fields(AblationConfig))
    raise UnknownFlag(f"Unknown ablation flag '{name}'. Known flags: {', '.join(known)}")


def apply_ablation(config: ModelConfig, flags: Mapping[str, bool]) -> ModelConfig:
    """Return a copy of ``config`` with the named components switched on or off.

    Args:
        config: Base configuration.
        flags: Flag name to state, e.g. ``{"lgcv": False}``.

    Returns:
        Validated ModelConfig for the variant.

    Raises:
        UnknownFlag: If a flag name is not recognised.
        ValidationError: If the combination is invalid.
    """
    updates = {resolve_flag(name): bool(state) for name, state in flags.items()}
    variant = replace(config, ablation=replace(config.ablation, **updates))
    validate_model_config(variant)
    off = [name for name, state in flags.items() if not state]
    if off:
        logger.info(f"Ablation variant without: {', '.join(off)}")
    return variant


def disabled_flags(names) -> dict[str, bool]:
    """``{name: False}`` for each name, validating every one."""
    flags = {}
    for name in names:
        resolve_flag(name)
        flags[name] = False
    return flags
