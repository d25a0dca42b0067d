"""Synthetic covariate-shift generators, CSV ingestion and the median split."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

SYNTH_KINDS = ("gaussian_mean_shift", "group_shift")


class DataError(ValueError):
    """Malformed input data."""


class DegenerateSplitError(DataError):
    """A median split leaves the target side empty."""


@dataclass(frozen=True)
class SyntheticSpec:
    """Ground-truth covariate shift with a known conditional score law.

    ``group_shift``: a group label ``g`` is drawn from ``p`` (source) or
    ``q`` (target) and ``S | g ~ Uniform(0, scales[g])``, so ``r(g) = q_g/p_g``
    and the conditional (1-alpha)-quantile is ``(1-alpha) * scales[g]``.

    ``gaussian_mean_shift``: ``X ~ N(0, I)`` (source) or ``N(mu, I)``
    (target) and ``S | x ~ Uniform(0, b(x))`` with
    ``b(x) = 0.25 + 0.75 * Phi_N(x_1)``.
    """

    kind: str = "group_shift"
    n1: int = 2000
    n2: int = 2000
    n3: int = 2000
    n_test: int = 2000
    seed: int = 0
    p: tuple = (0.3, 0.25, 0.2, 0.15, 0.1)
    q: tuple = (0.15, 0.2, 0.2, 0.2, 0.25)
    scales: tuple = (0.2, 0.35, 0.5, 0.7, 1.0)
    mu: tuple = (0.0,)

    def __post_init__(self):
        if self.kind not in SYNTH_KINDS:
            raise ValueError(f"unknown synthetic kind {self.kind!r}")
        for name in ("n1", "n2", "n3", "n_test"):
            if int(getattr(self, name)) < 1:
                raise ValueError(f"{name} must be at least 1")
        if self.kind == "group_shift":
            p = np.asarray(self.p, dtype=float)
            q = np.asarray(self.q, dtype=float)
            if p.shape != q.shape or p.shape != np.shape(self.scales):
                raise ValueError("p, q and scales need one entry per group")
            for name, v in (("p", p), ("q", q)):
                if np.any(v < 0) or not math.isclose(v.sum(), 1.0, abs_tol=1e-9):
                    raise ValueError(f"{name} is not a probability vector")
            if np.any((q > 0) & (p == 0)):
                raise ValueError("target puts mass on a group the source never visits")
            if np.any(np.asarray(self.scales) <= 0):
                raise ValueError("score scales must be positive")

    @property
    def n_groups(self) -> int:
        return len(self.p)

    @property
    def dim(self) -> int:
        return 1 if self.kind == "group_shift" else len(self.mu)

    def to_dict(self) -> dict:
        return {k: (list(v) if isinstance(v, tuple) else v)
                for k, v in self.__dict__.items()}


@dataclass
class SyntheticData:
    """Raw features, scores and oracle likelihood ratios of one draw."""

    X1: np.ndarray
    s1: np.ndarray
    X2: np.ndarray
    X3: np.ndarray
    X_test: np.ndarray
    s_test: np.ndarray
    r1: np.ndarray
    r3: np.ndarray
    r_test: np.ndarray
    spec: SyntheticSpec = field(repr=False, default=None)


def oracle_ratio(spec: SyntheticSpec, X) -> np.ndarray:
    """Exact ``dP2/dP1`` at feature rows ``X``."""
    X = np.asarray(X, dtype=float)
    if spec.kind == "group_shift":
        ratio = np.asarray(spec.q, dtype=float) / np.asarray(spec.p, dtype=float)
        return ratio[X[:, 0].astype(int) - 1]
    mu = np.asarray(spec.mu, dtype=float)
    return np.exp(X @ mu - 0.5 * mu @ mu)


def conditional_quantile(spec: SyntheticSpec, X, level: float) -> np.ndarray:
    """Oracle conditional quantile of ``S | X`` at ``level``."""
    return level * _score_scale(spec, np.asarray(X, dtype=float))


def _score_scale(spec: SyntheticSpec, X: np.ndarray) -> np.ndarray:
    if spec.kind == "group_shift":
        return np.asarray(spec.scales, dtype=float)[X[:, 0].astype(int) - 1]
    from scipy.special import ndtr
    return 0.25 + 0.75 * ndtr(X[:, 0])


def _features(spec: SyntheticSpec, rng, n: int, target: bool) -> np.ndarray:
    if spec.kind == "group_shift":
        probs = spec.q if target else spec.p
        g = rng.choice(spec.n_groups, size=n, p=np.asarray(probs, dtype=float))
        return (g + 1).astype(float).reshape(-1, 1)
    mu = np.asarray(spec.mu, dtype=float)
    X = rng.standard_normal((n, mu.shape[0]))
    return X + mu if target else X


def generate(spec: SyntheticSpec) -> SyntheticData:
    """Draw one dataset; fully determined by ``spec.seed``."""
    rng = np.random.default_rng(spec.seed)
    X1 = _features(spec, rng, spec.n1, False)
    s1 = rng.uniform(0.0, 1.0, spec.n1) * _score_scale(spec, X1)
    X2 = _features(spec, rng, spec.n2, True)
    X3 = _features(spec, rng, spec.n3, False)
    Xt = _features(spec, rng, spec.n_test, True)
    st = rng.uniform(0.0, 1.0, spec.n_test) * _score_scale(spec, Xt)
    return SyntheticData(X1, s1, X2, X3, Xt, st, oracle_ratio(spec, X1),
                         oracle_ratio(spec, X3), oracle_ratio(spec, Xt), spec)


# ---------------------------------------------------------------------------
# median split

@dataclass(frozen=True)
class SplitScenario:
    """Label-blind source/target partition by one feature's median.

    ``target_unlabeled`` and ``target_labeled`` partition ``target``.
    """

    column: int
    median: float
    source: np.ndarray
    target: np.ndarray
    target_unlabeled: np.ndarray
    target_labeled: np.ndarray


def median_split(features, column: int, seed: int = 0) -> SplitScenario:
    """Rows with ``x[column] <= median`` form the source, the rest the target.

    The target is shuffled and halved: ``floor(n/2)`` unlabelled rows and
    ``ceil(n/2)`` labelled rows. Only the chosen feature column is read.
    """
    X = np.asarray(features, dtype=float)
    if X.ndim != 2 or not (0 <= column < X.shape[1]):
        raise DataError(f"column {column} out of range for shape {X.shape}")
    col = X[:, column]
    m = float(np.median(col))
    source = np.flatnonzero(col <= m)
    target = np.flatnonzero(col > m)
    if target.size == 0:
        raise DegenerateSplitError(f"no value of column {column} exceeds its median {m}")
    rng = np.random.default_rng(seed)
    perm = rng.permutation(target)
    half = target.size // 2
    return SplitScenario(column, m, source, target, np.sort(perm[:half]), np.sort(perm[half:]))


# ---------------------------------------------------------------------------
# CSV

@dataclass(frozen=True)
class CsvSchema:
    """Column names to read; optional columns may be None."""

    features: tuple
    label: str | None = None
    score: str | None = None
    group: str | None = None


@dataclass
class Dataset:
    features: np.ndarray
    feature_names: tuple
    labels: np.ndarray | None = None
    scores: np.ndarray | None = None
    groups: np.ndarray | None = None

    def __len__(self) -> int:
        return self.features.shape[0]

    def take(self, idx) -> "Dataset":
        pick = (lambda a: None if a is None else a[idx])
        return Dataset(self.features[idx], self.feature_names, pick(self.labels),
                       pick(self.scores), pick(self.groups))


def _parse_float(text: str, row: int, col: str, path) -> float:
    try:
        val = float(text)
    except ValueError:
        raise DataError(f"{path}: row {row}, column {col!r}: cannot parse {text!r} "
                        "as a number") from None
    if not math.isfinite(val):
        raise DataError(f"{path}: row {row}, column {col!r}: non-finite value {text!r}")
    return val


def load_csv(path, schema: CsvSchema) -> Dataset:
    """Read a UTF-8 CSV with a header row into typed arrays.

    Rows are numbered from 1 after the header in error messages.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: file is empty") from None
        header = [h.strip() for h in header]
        wanted = list(schema.features) + [c for c in (schema.label, schema.score, schema.group)
                                          if c is not None]
        wanted = list(dict.fromkeys(wanted))
        missing = [c for c in wanted if c not in header]
        if missing:
            raise DataError(f"{path}: missing columns {missing}")
        pos = {name: header.index(name) for name in wanted}
        rows = {name: [] for name in wanted}
        n = 0
        for i, rec in enumerate(reader, start=1):
            if not rec or all(not c.strip() for c in rec):
                continue
            if len(rec) != len(header):
                raise DataError(f"{path}: row {i} has {len(rec)} fields, expected {len(header)}")
            for name in wanted:
                rows[name].append(_parse_float(rec[pos[name]].strip(), i, name, path))
            n += 1
    feats = np.array([rows[c] for c in schema.features], dtype=float).T.reshape(n, len(schema.features))
    get = (lambda c: None if c is None else np.array(rows[c], dtype=float))
    return Dataset(feats, tuple(schema.features), get(schema.label), get(schema.score),
                   get(schema.group))


def write_csv(path, columns: dict):
    """Write equal-length columns with a header; floats use ``repr`` precision."""
    names = list(columns)
    arrays = [np.asarray(columns[c]) for c in names]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(names)
        for row in zip(*arrays):
            w.writerow([repr(float(v)) for v in row])
