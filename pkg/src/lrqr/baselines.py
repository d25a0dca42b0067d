"""Split conformal and weighted conformal thresholds."""

from __future__ import annotations

import math

import numpy as np


def _check_level(alpha: float) -> float:
    # the rank construction is valid for any level, unlike the pinball-loss theory
    alpha = float(alpha)
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha!r}")
    return alpha


def split_conformal_threshold(scores, alpha: float) -> float:
    """The ``ceil((1 - alpha)(n + 1))``-th smallest score, or ``+inf``."""
    alpha = _check_level(alpha)
    s = np.sort(np.asarray(scores, dtype=float).reshape(-1))
    n = s.shape[0]
    if n == 0:
        raise ValueError("need at least one calibration score")
    k = math.ceil((1.0 - alpha) * (n + 1))
    return float(s[k - 1]) if k <= n else math.inf


def weighted_conformal_threshold(scores, cal_weights, test_weight: float,
                                 alpha: float) -> float:
    """Weighted conformal quantile with the test point's mass placed at ``+inf``.

    Returns the smallest calibration score ``t`` whose cumulative normalised
    weight reaches ``1 - alpha``, or ``+inf`` if none does. With all weights
    equal this reproduces :func:`split_conformal_threshold` exactly.
    """
    alpha = _check_level(alpha)
    s = np.asarray(scores, dtype=float).reshape(-1)
    w = np.asarray(cal_weights, dtype=float).reshape(-1)
    if s.shape != w.shape:
        raise ValueError("scores and weights differ in length")
    if s.size == 0:
        raise ValueError("need at least one calibration score")
    if np.any(~(w > 0)) or not np.all(np.isfinite(w)):
        raise ValueError("calibration weights must be positive and finite")
    if not (test_weight >= 0 and math.isfinite(test_weight)):
        raise ValueError("test weight must be non-negative and finite")
    # rescale so equal weights become exactly 1.0 and cumulative sums stay integral
    top = max(float(w.max()), float(test_weight))
    w = w / top
    tw = test_weight / top
    order = np.argsort(s, kind="stable")
    s, w = s[order], w[order]
    level = (1.0 - alpha) * (w.sum() + tw)
    cum = np.cumsum(w)
    hit = np.flatnonzero(cum >= level)
    return float(s[hit[0]]) if hit.size else math.inf


def weighted_conformal_thresholds(scores, cal_weights, test_weights, alpha: float) -> np.ndarray:
    """:func:`weighted_conformal_threshold` for many test weights at once.

    Agrees exactly with the scalar version: test weights not above the
    largest calibration weight share one cumulative sum; the rest fall back
    to the scalar routine.
    """
    alpha = _check_level(alpha)
    s = np.asarray(scores, dtype=float).reshape(-1)
    w = np.asarray(cal_weights, dtype=float).reshape(-1)
    tw = np.asarray(test_weights, dtype=float).reshape(-1)
    if s.shape != w.shape or s.size == 0:
        raise ValueError("scores and weights must be non-empty and equally long")
    if np.any(~(w > 0)) or not np.all(np.isfinite(w)):
        raise ValueError("calibration weights must be positive and finite")
    if np.any(~(tw >= 0)) or not np.all(np.isfinite(tw)):
        raise ValueError("test weights must be non-negative and finite")
    top = float(w.max())
    order = np.argsort(s, kind="stable")
    ss, ws = s[order], w[order] / top
    cum = np.cumsum(ws)
    out = np.empty(tw.shape[0])
    small = tw <= top
    level = (1.0 - alpha) * (ws.sum() + tw[small] / top)
    idx = np.searchsorted(cum, level, side="left")
    out[small] = np.where(idx < ss.size, ss[np.minimum(idx, ss.size - 1)], np.inf)
    for i in np.flatnonzero(~small):
        out[i] = weighted_conformal_threshold(s, w, float(tw[i]), alpha)
    return out
