"""Kernel backend selection.

The compiled extension is preferred when it imported cleanly; the pure-numpy
twin is the fallback and can be forced with SARWIND_PURE_PYTHON=1 (useful for
the backend-equivalence tests and the benchmark).
"""
from __future__ import annotations

import os

from . import _kernels_py

if os.environ.get("SARWIND_PURE_PYTHON", "").strip() in ("1", "true", "yes"):
    _impl = _kernels_py
    BACKEND = "python"
else:
    try:
        from . import _kernels as _impl  # type: ignore[no-redef]

        BACKEND = "compiled"
    except ImportError:
        _impl = _kernels_py
        BACKEND = "python"

forward = _impl.forward
invert = _impl.invert
golden_iterations = _impl.golden_iterations
