"""Ridge regression predictor and nonconformity scores."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve

DEFAULT_RIDGE_GRID = tuple(np.logspace(-4, 2, 13))


class SingularSystemError(ValueError):
    """Penalised normal equations are not positive definite."""


@dataclass(frozen=True)
class RidgeModel:
    coefficients: np.ndarray
    intercept: float
    penalty: float

    def predict(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X[None, :]
        if X.shape[1] != self.coefficients.shape[0]:
            raise ValueError(f"expected {self.coefficients.shape[0]} features, got {X.shape[1]}")
        return X @ self.coefficients + self.intercept


def ridge_fit(X, y, penalty: float) -> RidgeModel:
    """Minimise ``||y - X b - c||^2 + penalty ||b||^2``; the intercept is unpenalised.

    Solved on centred data through a Cholesky factorisation.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float).reshape(-1)
    if X.ndim != 2 or X.shape[0] < 1:
        raise ValueError("need at least one row")
    if X.shape[0] != y.shape[0]:
        raise ValueError("X and y differ in length")
    if penalty < 0:
        raise ValueError("penalty must be non-negative")
    xm, ym = X.mean(axis=0), y.mean()
    Xc = X - xm
    A = Xc.T @ Xc + penalty * np.eye(X.shape[1])
    try:
        c = cho_factor(A)
        if np.min(np.abs(np.diag(c[0]))) <= 1e-12 * max(1.0, np.abs(A).max()) ** 0.5:
            raise LinAlgError("numerically singular")
    except LinAlgError as exc:
        raise SingularSystemError(f"ridge system is singular at penalty={penalty}") from exc
    beta = cho_solve(c, Xc.T @ (y - ym))
    return RidgeModel(beta, float(ym - xm @ beta), float(penalty))


def ridge_cv_fit(X, y, penalty_grid=DEFAULT_RIDGE_GRID, folds: int = 5,
                 seed: int = 0) -> RidgeModel:
    """Pick the grid penalty with the smallest mean held-out squared error.

    Folds come from a seeded shuffle; the winner is refit on all rows. Ties
    go to the earlier grid entry.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float).reshape(-1)
    grid = [float(v) for v in penalty_grid]
    if not grid:
        raise ValueError("penalty grid is empty")
    n = X.shape[0]
    if folds < 2 or folds > n:
        raise ValueError(f"need 2 <= folds <= n, got folds={folds}, n={n}")
    perm = np.random.default_rng(seed).permutation(n)
    parts = np.array_split(perm, folds)
    mse = np.zeros(len(grid))
    for i, lam in enumerate(grid):
        for k in range(folds):
            test = parts[k]
            train = np.concatenate([parts[j] for j in range(folds) if j != k])
            try:
                m = ridge_fit(X[train], y[train], lam)
            except SingularSystemError:
                mse[i] = math.inf
                break
            mse[i] += np.mean((y[test] - m.predict(X[test])) ** 2) / folds
    best = int(np.argmin(mse))
    return ridge_fit(X, y, grid[best])


def score_abs_residual(model: RidgeModel, x, y):
    """``|y - f(x)|`` elementwise."""
    out = np.abs(np.asarray(y, dtype=float) - model.predict(x))
    return float(out[0]) if np.ndim(y) == 0 else out


def _check_probs(probs) -> np.ndarray:
    p = np.asarray(probs, dtype=float)
    if np.any(p < 0) or np.any(np.abs(p.sum(axis=-1) - 1.0) > 1e-6):
        raise ValueError("probabilities must be non-negative and sum to 1")
    return p


def score_neg_log_prob(probs, label_index, cap: float = math.inf):
    """``-log p[label]``; a zero probability maps to ``cap`` (``inf`` by default)."""
    p = _check_probs(probs)
    picked = np.take_along_axis(np.atleast_2d(p), np.atleast_1d(label_index).reshape(-1, 1),
                                axis=1)[:, 0]
    with np.errstate(divide="ignore"):
        out = np.minimum(-np.log(picked), cap)
    out = out + 0.0  # -0.0 -> 0.0
    return float(out[0]) if p.ndim == 1 else out


def score_one_minus_prob(probs, label_index):
    """``1 - p[label]``."""
    p = _check_probs(probs)
    picked = np.take_along_axis(np.atleast_2d(p), np.atleast_1d(label_index).reshape(-1, 1),
                                axis=1)[:, 0]
    out = 1.0 - picked
    return float(out[0]) if p.ndim == 1 else out
