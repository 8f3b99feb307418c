"""Capture of internal tensors (attention weights, gate activations) for checks.

Modules call ``emit`` at points of interest; nothing is kept unless a
``capture`` block is active in the current context::

    with capture() as captured:
        model(left, right, iters=2)
    for weights in captured.tensors["attention"]:
        ...
"""

import logging
from collections import defaultdict
from contextlib import contextmanager
from contextvars import ContextVar
from typing import Iterator, Optional

import torch

logger = logging.getLogger(__name__)


class Capture:
    """Named lists of detached tensors collected during a capture block."""

    def __init__(self, names: Optional[set[str]] = None):
        self.names = names
        self.tensors: dict[str, list[torch.Tensor]] = defaultdict(list)

    def wants(self, name: str) -> bool:
        return self.names is None or name in self.names

    def add(self, name: str, tensor: torch.Tensor) -> None:
        if self.wants(name):
            self.tensors[name].append(tensor.detach())


_active_capture: ContextVar[Optional[Capture]] = ContextVar("granular_stereo_capture", default=None)


def is_capturing(name: Optional[str] = None) -> bool:
    """True when a capture block is active (and wants ``name``, if given)."""
    captured = _active_capture.get()
    if captured is None:
        return False
    return name is None or captured.wants(name)


def emit(name: str, tensor: torch.Tensor) -> None:
    """Record ``tensor`` under ``name`` if a capture block is active."""
    captured = _active_capture.get()
    if captured is not None:
        captured.add(name, tensor)


@contextmanager
def capture(*names: str) -> Iterator[Capture]:
    """Collect emitted tensors, optionally restricted to ``names``."""
    captured = Capture(set(names) if names else None)
    token = _active_capture.set(captured)
    try:
        yield captured
    finally:
        _active_capture.reset(token)
        logger.debug(f"Captured {sum(len(v) for v in captured.tensors.values())} tensors")
