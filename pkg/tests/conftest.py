"""Shared fixtures for the test suite."""

import pytest
import torch

from tests.helpers import make_tiny_config


@pytest.fixture
def tiny_config():
    """Tiny model configuration with every component on."""
    return make_tiny_config()


@pytest.fixture
def tiny_model(tiny_config):
    """Seeded tiny StereoModel."""
    from granular_stereo.model import StereoModel

    torch.manual_seed(0)
    return StereoModel(tiny_config)
