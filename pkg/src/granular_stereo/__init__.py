"""Granular Stereo - iterative stereo matching with local-global cost volumes."""

import logging

__version__ = "0.1.0"
