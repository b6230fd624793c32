"""Backend selection for the interpolation kernels.

The compiled extension is used when it imports; otherwise, or when
``BDSDELAB_PURE_PYTHON=1`` is set, the numpy fallback is used.
"""

from __future__ import annotations

import os

from . import _kernels_py

if os.environ.get("BDSDELAB_PURE_PYTHON", "") not in ("", "0"):
    _impl = _kernels_py
    BACKEND = "python"
else:
    try:
        from . import _kernels as _impl  # type: ignore[attr-defined]

        BACKEND = "cython"
    except ImportError:
        _impl = _kernels_py
        BACKEND = "python"

interp_1d = _impl.interp_1d
interp_2d = _impl.interp_2d

__all__ = ["BACKEND", "interp_1d", "interp_2d"]
