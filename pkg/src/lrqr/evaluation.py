"""Prediction sets, coverage metrics, aggregation and report files."""

from __future__ import annotations

import csv
import json
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

REPORT_COLUMNS = ("method", "replication", "coverage", "avg_size", "lambda", "seed")
SIZE_CONVENTION = "regression set size is the total interval length 2*max(h(x), 0)"


def _pair(scores, thresholds):
    s = np.asarray(scores, dtype=float).reshape(-1)
    t = np.asarray(thresholds, dtype=float).reshape(-1)
    if t.size == 1 and s.size > 1:
        t = np.full_like(s, t[0])
    if s.shape != t.shape:
        raise ValueError(f"{s.size} scores but {t.size} thresholds")
    if s.size == 0:
        raise ValueError("coverage of an empty sample is undefined")
    return s, t


def predict_set_regression(prediction, threshold):
    """Interval ``[f - h, f + h]``, or ``None`` (empty) when ``h < 0``.

    Vector input returns ``(lower, upper)`` arrays with NaN marking empty sets.
    """
    if np.ndim(prediction) == 0 and np.ndim(threshold) == 0:
        f, h = float(prediction), float(threshold)
        return None if h < 0 else (f - h, f + h)
    f = np.asarray(prediction, dtype=float)
    h = np.broadcast_to(np.asarray(threshold, dtype=float), f.shape)
    lo = np.where(h >= 0, f - h, np.nan)
    hi = np.where(h >= 0, f + h, np.nan)
    return lo, hi


def regression_set_size(threshold) -> np.ndarray:
    return 2.0 * np.maximum(np.asarray(threshold, dtype=float), 0.0)


def predict_set_classification(probs, threshold, score: str = "one_minus_prob"):
    """Labels ``y`` with ``score(x, y) <= h(x)``, as a sorted index array."""
    p = np.asarray(probs, dtype=float)
    if np.any(p < 0) or abs(p.sum() - 1.0) > 1e-6:
        raise ValueError("probabilities must be non-negative and sum to 1")
    if score == "one_minus_prob":
        s = 1.0 - p
    elif score == "neg_log_prob":
        with np.errstate(divide="ignore"):
            s = -np.log(p)
    else:
        raise ValueError(f"unknown score {score!r}")
    return np.flatnonzero(s <= threshold)


def coverage(scores_test, thresholds_test) -> float:
    """Fraction of points with ``score <= threshold``."""
    s, t = _pair(scores_test, thresholds_test)
    return float(np.mean(s <= t))


def group_coverage(scores, thresholds, groups) -> np.ndarray:
    """Coverage within each group; NaN marks a group with no rows.

    ``groups`` is an ``n x K`` 0/1 membership matrix (rows may belong to
    several groups) or a length-``n`` vector of labels ``1..K``.
    """
    s, t = _pair(scores, thresholds)
    g = np.asarray(groups)
    if g.ndim == 1:
        k = int(g.max()) if g.size else 0
        g = (g.reshape(-1, 1).astype(int) == np.arange(1, k + 1)).astype(float)
    if g.shape[0] != s.size:
        raise ValueError("group memberships do not match the sample size")
    hit = (s <= t).astype(float)
    counts = g.sum(axis=0)
    out = np.full(g.shape[1], np.nan)
    nz = counts > 0
    out[nz] = (g[:, nz].T @ hit) / counts[nz]
    return out


def weighted_coverage_check(scores_source, thresholds_source, oracle_r) -> float:
    """``mean(r * 1[s <= h])`` over the source sample: target coverage by change of measure."""
    s, t = _pair(scores_source, thresholds_source)
    r = np.asarray(oracle_r, dtype=float).reshape(-1)
    if r.shape != s.shape:
        raise ValueError("ratio values do not match the sample size")
    if np.any(r <= 0):
        raise ValueError("ratio values must be positive")
    return float(np.mean(r * (s <= t)))


@dataclass
class EvalReport:
    """Metrics for one method on one replication."""

    method: str
    coverage: float
    avg_size: float
    n_test: int
    replication: int = 0
    seed: int = 0
    lam: float = float("nan")
    group_coverage: np.ndarray | None = None
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        if not 0.0 <= self.coverage <= 1.0:
            raise ValueError(f"coverage {self.coverage} outside [0, 1]")
        if self.avg_size < 0:
            raise ValueError("set size must be non-negative")

    def row(self) -> dict:
        return {"method": self.method, "replication": self.replication,
                "coverage": self.coverage, "avg_size": self.avg_size,
                "lambda": self.lam, "seed": self.seed}


def summarize(reports) -> dict:
    """Per-method mean, standard deviation and standard error across replications."""
    by = {}
    for r in reports:
        by.setdefault(r.method, []).append(r)
    out = {}
    for method, rs in by.items():
        cov = np.array([r.coverage for r in rs])
        size = np.array([r.avg_size for r in rs])
        m = len(rs)
        sd = float(cov.std(ddof=1)) if m > 1 else 0.0
        entry = {
            "replications": m,
            "coverage_mean": float(cov.mean()),
            "coverage_std": sd,
            "coverage_se": sd / math.sqrt(m),
            "avg_size_mean": float(size.mean()),
            "avg_size_std": float(size.std(ddof=1)) if m > 1 else 0.0,
        }
        groups = [r.group_coverage for r in rs if r.group_coverage is not None]
        if groups:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", RuntimeWarning)  # all-NaN group columns
                gm = np.nanmean(np.vstack(groups), axis=0)
            entry["group_coverage_mean"] = [None if math.isnan(v) else float(v) for v in gm]
        out[method] = entry
    return out


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    return str(v)


def write_report_csv(path, reports):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(REPORT_COLUMNS)
        for r in reports:
            row = r.row()
            w.writerow([_fmt(row[c]) for c in REPORT_COLUMNS])


def write_report_json(path, reports, meta: dict | None = None):
    body = {"size_convention": SIZE_CONVENTION, "methods": summarize(reports)}
    if meta:
        body["meta"] = meta
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(body, fh, indent=2, sort_keys=True, allow_nan=True)
        fh.write("\n")
