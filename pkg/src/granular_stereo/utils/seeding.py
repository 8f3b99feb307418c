"""Seeding helpers for reproducible runs."""

import logging
import os
import random

import numpy as np
import torch

logger = logging.getLogger(__name__)

SEED_ENV_VAR = "GRANULAR_STEREO_SEED"


def default_seed(fallback: int = 0) -> int:
    """Seed from the GRANULAR_STEREO_SEED environment variable, else ``fallback``."""
    raw = os.getenv(SEED_ENV_VAR)
    if raw is None or not raw.strip():
        return fallback
    try:
        return int(raw)
    except ValueError:
        logger.warning(f"Ignoring non-integer {SEED_ENV_VAR}={raw!r}; using {fallback}")
        return fallback


def seed_everything(seed: int) -> torch.Generator:
    """Seed Python, NumPy and torch; return a torch generator seeded the same way."""
    random.seed(seed)
    np.random.seed(seed % (2**32))
    torch.manual_seed(seed)
    generator = torch.Generator()
    generator.manual_seed(seed)
    logger.debug(f"Seeded all generators with {seed}")
    return generator


def step_rng(seed: int, step: int) -> np.random.Generator:
    """Independent NumPy generator for one training step.

    Batch composition depends only on (seed, step), which makes resumed runs
    replay the same data as uninterrupted ones.
    """
    return np.random.default_rng([seed, step])
