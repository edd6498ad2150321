"""Backend selection for the grid-field kernels.

The compiled extension is preferred. Set ``SKILLATLAS_PURE_PYTHON=1`` to force
the pure-Python implementation (useful for debugging and for the benchmark).
"""
from __future__ import annotations

import os

from . import _kernels_py

if os.environ.get("SKILLATLAS_PURE_PYTHON", "") not in ("", "0"):
    _impl = _kernels_py
    BACKEND = "python"
else:
    try:
        from . import _kernels as _impl  # type: ignore[no-redef]

        BACKEND = "cython"
    except ImportError:
        _impl = _kernels_py
        BACKEND = "python"

bfs_distance = _impl.bfs_distance
accumulate_weighted = _impl.accumulate_weighted
ema = _impl.ema
paint_rgba = _impl.paint_rgba

__all__ = ["BACKEND", "bfs_distance", "accumulate_weighted", "ema", "paint_rgba"]
