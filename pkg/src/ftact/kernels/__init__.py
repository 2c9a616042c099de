"""Kernel backend selection.

The compiled extension (ftact.kernels._core) accelerates the physics substep
and conv2d patch movement. It is selected automatically when importable and
produces bit-identical results to the pure reference in ``pyref``; set
FTACT_PURE_PYTHON=1 to force the fallback. ``ftact bench`` compares the two.
"""

from __future__ import annotations

import importlib
import os

from . import pyref
from .pyref import (
    CONTACT_COLS,
    MAX_CONTACTS,
    PARAMS_FIXED,
    PER_BOTTLE,
    STATE_FIXED,
    params_size,
    state_size,
)

_core = None
if not os.environ.get("FTACT_PURE_PYTHON"):
    try:
        _core = importlib.import_module("._core", __name__)
    except ImportError:
        _core = None

if _core is not None:
    BACKEND = "compiled"
    step_world = _core.step_world
    im2col = _core.im2col
    col2im = _core.col2im
else:
    BACKEND = "python"
    step_world = pyref.step_world
    im2col = pyref.im2col
    col2im = pyref.col2im


def using_compiled() -> bool:
    return BACKEND == "compiled"


__all__ = [
    "BACKEND",
    "CONTACT_COLS",
    "MAX_CONTACTS",
    "PARAMS_FIXED",
    "PER_BOTTLE",
    "STATE_FIXED",
    "col2im",
    "im2col",
    "params_size",
    "pyref",
    "state_size",
    "step_world",
    "using_compiled",
]
