"""Fixed feature maps ``Phi : X -> R^d`` and linear hypotheses over them."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

KINDS = ("raw_with_intercept", "group_indicators", "precomputed_columns")


class ShapeError(ValueError):
    """Input arity or vector length does not match the declared basis."""


@dataclass(frozen=True)
class Basis:
    """A fixed basis ``Phi = (phi_1, ..., phi_d)``.

    Kinds
    -----
    raw_with_intercept
        ``Phi(x) = (1, x_1, ..., x_p)``. With ``n_inputs=0`` this is the
        constant basis.
    group_indicators
        0/1 group membership. If ``n_inputs == 1`` the single input is a group
        label in ``1..n_groups``; if ``n_inputs == n_groups`` the inputs are
        membership flags and groups may overlap. Every row must belong to at
        least one group.
    precomputed_columns
        Opaque real columns (e.g. embeddings), optionally preceded by an
        intercept column and optionally standardised with statistics fitted
        on source data only.
    """

    kind: str
    n_inputs: int
    n_groups: int = 0
    intercept: bool = True
    center: tuple[float, ...] | None = None
    scale: tuple[float, ...] | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown basis kind {self.kind!r}")
        if self.n_inputs < 0:
            raise ValueError("n_inputs must be non-negative")
        if self.kind == "group_indicators":
            if self.n_groups < 1:
                raise ValueError("group_indicators needs n_groups >= 1")
            if self.n_inputs not in (1, self.n_groups):
                raise ValueError("group_indicators takes either one label column "
                                 "or one membership column per group")
        if self.kind == "raw_with_intercept" and not self.intercept:
            raise ValueError("raw_with_intercept always carries an intercept")
        if (self.center is None) != (self.scale is None):
            raise ValueError("center and scale must be given together")
        if self.center is not None and len(self.center) != self.n_inputs:
            raise ValueError("standardisation statistics have the wrong length")
        if self.dim < 1:
            raise ValueError("basis dimension must be at least 1")

    # constructors -----------------------------------------------------
    @classmethod
    def raw_with_intercept(cls, n_features: int) -> "Basis":
        return cls("raw_with_intercept", int(n_features), intercept=True)

    @classmethod
    def constant(cls) -> "Basis":
        return cls.raw_with_intercept(0)

    @classmethod
    def group_indicators(cls, n_groups: int, membership_columns: bool = False,
                         intercept: bool = False) -> "Basis":
        n_inputs = n_groups if membership_columns else 1
        return cls("group_indicators", n_inputs, n_groups=int(n_groups),
                   intercept=intercept)

    @classmethod
    def precomputed_columns(cls, n_columns: int, intercept: bool = True) -> "Basis":
        return cls("precomputed_columns", int(n_columns), intercept=intercept)

    # properties -------------------------------------------------------
    @property
    def dim(self) -> int:
        extra = 1 if self.intercept else 0
        if self.kind == "group_indicators":
            return self.n_groups + extra
        return self.n_inputs + extra

    @property
    def intercept_index(self) -> int | None:
        return 0 if self.intercept else None

    @property
    def standardized(self) -> bool:
        return self.center is not None

    def fit_standardization(self, X_source) -> "Basis":
        """Return a copy that standardises each input column.

        Statistics come from ``X_source`` (source rows only); constant
        columns keep unit scale.
        """
        if self.kind == "group_indicators":
            raise ValueError("group indicators are not standardised")
        X = self._check_matrix(X_source)
        mu = X.mean(axis=0)
        sd = X.std(axis=0)
        sd = np.where(sd > 0, sd, 1.0)
        return Basis(self.kind, self.n_inputs, self.n_groups, self.intercept,
                     tuple(float(v) for v in mu), tuple(float(v) for v in sd))

    # evaluation -------------------------------------------------------
    def _check_matrix(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X.reshape(-1, self.n_inputs) if self.n_inputs == 0 else X[None, :]
        if X.ndim != 2 or X.shape[1] != self.n_inputs:
            raise ShapeError(f"expected inputs with {self.n_inputs} columns, "
                             f"got shape {X.shape}")
        return X

    def evaluate(self, X) -> np.ndarray:
        """Evaluate ``Phi`` row-wise on an ``(n, n_inputs)`` array."""
        X = self._check_matrix(X)
        n = X.shape[0]
        if self.kind == "group_indicators":
            core = self._memberships(X)
        else:
            core = X
            if self.center is not None:
                core = (core - np.asarray(self.center)) / np.asarray(self.scale)
        if self.intercept:
            return np.hstack([np.ones((n, 1)), core])
        return np.array(core, dtype=float, copy=True)

    def _memberships(self, X: np.ndarray) -> np.ndarray:
        if self.n_inputs == 1:
            labels = X[:, 0]
            idx = labels.astype(int)
            if np.any(idx != labels) or np.any(idx < 1) or np.any(idx > self.n_groups):
                raise ShapeError(f"group labels must be integers in 1..{self.n_groups}")
            out = np.zeros((X.shape[0], self.n_groups))
            out[np.arange(X.shape[0]), idx - 1] = 1.0
            return out
        if not np.all((X == 0.0) | (X == 1.0)):
            raise ShapeError("membership columns must be 0/1")
        if X.shape[0] and np.any(X.sum(axis=1) < 1):
            raise ShapeError("every row must belong to at least one group")
        return X.copy()

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "n_inputs": self.n_inputs,
            "n_groups": self.n_groups,
            "intercept": self.intercept,
            "center": None if self.center is None else list(self.center),
            "scale": None if self.scale is None else list(self.scale),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Basis":
        center = d.get("center")
        scale = d.get("scale")
        return cls(d["kind"], int(d["n_inputs"]), int(d.get("n_groups", 0)),
                   bool(d.get("intercept", True)),
                   None if center is None else tuple(float(v) for v in center),
                   None if scale is None else tuple(float(v) for v in scale))


@dataclass(frozen=True)
class Hypothesis:
    """Coefficients ``gamma`` of ``h(x) = <gamma, Phi(x)>``."""

    gamma: np.ndarray

    def __post_init__(self):
        g = np.array(self.gamma, dtype=float).reshape(-1)
        g.setflags(write=False)
        object.__setattr__(self, "gamma", g)

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.gamma))


def eval_basis(basis: Basis, x) -> np.ndarray:
    """``Phi(x)`` for a single feature vector."""
    x = np.asarray(x, dtype=float).reshape(-1)
    if x.shape[0] != basis.n_inputs:
        raise ShapeError(f"expected {basis.n_inputs} features, got {x.shape[0]}")
    return basis.evaluate(x.reshape(1, -1))[0]


def eval_h(basis: Basis, hyp: Hypothesis, x) -> float:
    """Threshold ``<gamma, Phi(x)>`` for a single feature vector."""
    if hyp.gamma.shape[0] != basis.dim:
        raise ShapeError(f"gamma has length {hyp.gamma.shape[0]}, basis dim is {basis.dim}")
    return float(eval_basis(basis, x) @ hyp.gamma)
