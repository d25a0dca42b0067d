"""Pinball (quantile) loss and its subgradient.

The loss ``pinball(c, s, alpha)`` charges ``(1 - alpha) * (s - c)`` when the
score ``s`` lies at or above the threshold ``c`` and ``alpha * (c - s)``
otherwise, so its minimiser over constant ``c`` is a ``(1 - alpha)``-quantile.
"""

from __future__ import annotations

import numpy as np


def check_alpha(alpha: float) -> float:
    """Validate a miscoverage level; returns it as a float."""
    alpha = float(alpha)
    if not (0.0 < alpha <= 0.5):
        raise ValueError(f"alpha must lie in (0, 0.5], got {alpha!r}")
    return alpha


def pinball(c, s, alpha: float):
    """Pinball loss of threshold ``c`` against score ``s``.

    Works elementwise on arrays (broadcasting) and returns a Python float
    for scalar inputs.
    """
    alpha = check_alpha(alpha)
    diff = np.asarray(s, dtype=float) - np.asarray(c, dtype=float)
    out = np.where(diff >= 0, (1.0 - alpha) * diff, -alpha * diff)
    return float(out) if out.ndim == 0 else out


def pinball_subgrad(c, s, alpha: float):
    """Subgradient of :func:`pinball` with respect to ``c``.

    Returns ``1[s <= c] - (1 - alpha)``. The indicator is closed, so a tie
    ``s == c`` yields ``alpha``.
    """
    alpha = check_alpha(alpha)
    covered = np.asarray(s, dtype=float) <= np.asarray(c, dtype=float)
    out = covered.astype(float) - (1.0 - alpha)
    return float(out) if out.ndim == 0 else out
