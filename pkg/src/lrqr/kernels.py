"""Kernel backend selection.

The compiled extension is used when it imports; otherwise the numpy
implementation is used. Setting ``LRQR_PURE_PYTHON=1`` forces the fallback.
"""

from __future__ import annotations

import os

from . import _kernels_py

BACKEND = "python"
_impl = _kernels_py

if os.environ.get("LRQR_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _ckernels as _impl  # type: ignore[no-redef]
        BACKEND = "cython"
    except ImportError:  # extension not built
        _impl = _kernels_py

pinball_value_grad = _impl.pinball_value_grad
projected_subgradient = _impl.projected_subgradient
line_search = _impl.line_search

__all__ = ["BACKEND", "pinball_value_grad", "projected_subgradient", "line_search"]
