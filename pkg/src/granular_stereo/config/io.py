"""Configuration file I/O operations.

The file format is plain text with one ``section.key = value`` per line and
``#`` comments::

    # desk overfit run
    encoder.embed_dim = 64
    decoder.train_iters = 8
    train.peak_lr = 2e-4
    ablation.global_guidance = false
"""

import logging
import typing
from pathlib import Path

from granular_stereo.config.model import (
    AblationConfig,
    DecoderConfig,
    EncoderConfig,
    LossConfig,
    MatchingConfig,
    ModelConfig,
    TrainConfig,
)
from granular_stereo.errors import ConfigError
from granular_stereo.utils.fs_utils import safe_write

logger = logging.getLogger(__name__)

SECTIONS = {
    "encoder": EncoderConfig,
    "matching": MatchingConfig,
    "decoder": DecoderConfig,
    "loss": LossConfig,
    "ablation": AblationConfig,
    "train": TrainConfig,
}

_TRUE = {"true", "yes", "on", "1"}
_FALSE = {"false", "no", "off", "0"}


def _coerce(raw: str, annotation, where: str):
    """Coerce a raw string to the type a dataclass field declares."""
    origin = typing.get_origin(annotation)
    args = typing.get_args(annotation)

    if origin is typing.Union and type(None) in args:
        if raw.lower() in ("none", "null", ""):
            return None
        inner = next(a for a in args if a is not type(None))
        return _coerce(raw, inner, where)

    if origin is tuple:
        parts = [p.strip() for p in raw.strip("()[] ").split(",") if p.strip()]
        return tuple(_coerce(p, args[0], where) for p in parts)

    try:
        if annotation is bool:
            lowered = raw.lower()
            if lowered in _TRUE:
                return True
            if lowered in _FALSE:
                return False
            raise ValueError(f"not a boolean: {raw!r}")
        if annotation is int:
            return int(raw)
        if annotation is float:
            return float(raw)
    except ValueError as e:
        raise ConfigError(f"{where}: cannot read value {raw!r} ({e})")
    return raw


def parse_config_text(text: str, source: str = "<string>") -> dict[str, dict]:
    """Parse config text into ``{section: {key: value}}`` with typed values.

    Raises:
        ConfigError: On malformed lines, unknown sections or keys, duplicate keys
            or values that cannot be coerced.
    """
    result: dict[str, dict] = {}
    hints = {name: typing.get_type_hints(cls) for name, cls in SECTIONS.items()}

    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        where = f"{source}:{lineno}"
        if "=" not in stripped:
            raise ConfigError(f"{where}: expected 'section.key = value', got {stripped!r}")

        name, raw = (part.strip() for part in stripped.split("=", 1))
        if "." not in name:
            raise ConfigError(f"{where}: key {name!r} must be written as 'section.key'")
        section, key = name.split(".", 1)

        if section not in SECTIONS:
            raise ConfigError(
                f"{where}: unknown section {section!r}. "
                f"Must be one of: {', '.join(sorted(SECTIONS))}"
            )
        if key not in hints[section]:
            raise ConfigError(f"{where}: unknown key {name!r}")

        values = result.setdefault(section, {})
        if key in values:
            raise ConfigError(f"{where}: duplicate key {name!r}")
        values[key] = _coerce(raw, hints[section][key], where)

    return result


def load_config(path: Path) -> tuple[ModelConfig, TrainConfig]:
    """Load model and training configuration from a plain-text file.

    Args:
        path: Path to the configuration file.

    Returns:
        Tuple of (ModelConfig, TrainConfig); sections missing from the file keep defaults.

    Raises:
        ConfigError: If the file cannot be read or contains invalid entries.
    """
    path = Path(path)

    if not path.exists():
        raise ConfigError(f"Configuration file not found: {path}")
    if not path.is_file():
        raise ConfigError(f"Configuration path is not a file: {path}")

    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise ConfigError(f"Could not read configuration file: {e}")

    sections = parse_config_text(text, source=str(path))
    model_config = ModelConfig.from_dict({k: v for k, v in sections.items() if k != "train"})
    train_config = TrainConfig.from_dict(sections.get("train", {}))
    logger.debug(f"Loaded configuration from {path}")
    return model_config, train_config


def format_config(model_config: ModelConfig, train_config: TrainConfig) -> str:
    """Render both configurations in the plain-text format."""
    lines = []
    sections = model_config.to_dict()
    sections["train"] = train_config.to_dict()
    for section, values in sections.items():
        for key, value in values.items():
            if value is None:
                text = "none"
            elif isinstance(value, bool):
                text = "true" if value else "false"
            elif isinstance(value, (list, tuple)):
                text = ", ".join(repr(v) for v in value)
            else:
                text = repr(value) if isinstance(value, float) else str(value)
            lines.append(f"{section}.{key} = {text}")
    return "\n".join(lines) + "\n"


def save_config(model_config: ModelConfig, train_config: TrainConfig, path: Path) -> None:
    """Save both configurations to a plain-text file.

    Raises:
        ConfigError: If the file cannot be written.
    """
    try:
        safe_write(Path(path), format_config(model_config, train_config))
        logger.debug(f"Saved configuration to {path}")
    except OSError as e:
        raise ConfigError(f"Could not write configuration file: {e}")

