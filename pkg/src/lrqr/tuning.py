"""Regularisation choice: the sample-size law for lambda and gradient-norm CV."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .basis import Basis
from .solver import (CalibrationBundle, LrqrConfig, ThresholdModel, gradient_norm_measure,
                     solve)

GRID_SIZE = 10


def lambda_star(n1: int, n2: int, n3: int, c0: float = 1.0) -> float:
    """``c0 * n1^(-1/3) * (1/n2 + 1/n3)^(-1/3)``.

    Written with cube roots so that ``lambda_star(8 * n1, ...)`` is exactly
    half of ``lambda_star(n1, ...)``.
    """
    for name, v in (("n1", n1), ("n2", n2), ("n3", n3)):
        if v < 1:
            raise ValueError(f"{name} must be at least 1, got {v}")
    if not c0 > 0:
        raise ValueError(f"c0 must be positive, got {c0}")
    denom = float(np.cbrt(float(n1))) * float(np.cbrt(1.0 / n2 + 1.0 / n3))
    return c0 / denom


def lambda_grid(lam_star: float) -> np.ndarray:
    """Ten equally spaced values from ``lam_star / 10`` to ``lam_star``."""
    if not (lam_star > 0 and math.isfinite(lam_star)):
        raise ValueError(f"lambda_star must be positive, got {lam_star}")
    return lam_star * np.arange(1, GRID_SIZE + 1) / GRID_SIZE


@dataclass
class TuneResult:
    lambda_star: float
    grid: np.ndarray
    fold_scores: np.ndarray
    chosen_lambda: float
    final_model: ThresholdModel
    final_diagnostics: object = None
    seed: int = 0

    @property
    def mean_scores(self) -> np.ndarray:
        return self.fold_scores.mean(axis=1)

    def to_dict(self) -> dict:
        return {
            "lambda_star": self.lambda_star,
            "grid": [float(v) for v in self.grid],
            "fold_scores": [[float(v) for v in row] for row in self.fold_scores],
            "mean_scores": [float(v) for v in self.mean_scores],
            "chosen_lambda": self.chosen_lambda,
            "seed": self.seed,
        }


def fold_indices(n: int, folds: int, rng) -> list:
    perm = rng.permutation(n)
    return [np.sort(part) for part in np.array_split(perm, folds)]


def cross_validate(bundle: CalibrationBundle, basis: Basis, config: LrqrConfig,
                   folds: int = 3, c0: float = 1.0, grid=None) -> TuneResult:
    """Choose lambda by held-out gradient norm and refit on the full bundle.

    S1, S2 and S3 are each shuffled (seeded by ``config.seed``) and cut into
    ``folds`` parts; fold ``k`` of every sample is held out together. The
    lambda with the smallest mean held-out gradient norm wins, ties going to
    the smaller lambda.
    """
    if folds < 2:
        raise ValueError("cross-validation needs at least 2 folds")
    for name, n in (("S1", bundle.n1), ("S2", bundle.n2), ("S3", bundle.n3)):
        if n < folds:
            raise ValueError(f"{name} has {n} rows, fewer than {folds} folds")
    lam_star = lambda_star(bundle.n1, bundle.n2, bundle.n3, c0)
    grid = lambda_grid(lam_star) if grid is None else np.asarray(grid, dtype=float)
    rng = np.random.default_rng(config.seed)
    parts = [fold_indices(n, folds, rng) for n in (bundle.n1, bundle.n2, bundle.n3)]
    splits = []
    for k in range(folds):
        train = [np.concatenate([p[j] for j in range(folds) if j != k]) for p in parts]
        held = [p[k] for p in parts]
        splits.append((bundle.subset(*train), bundle.subset(*held)))
    scores = np.empty((grid.shape[0], folds))
    for i, lam in enumerate(grid):
        cfg = replace(config, lam=float(lam))
        for k, (train, held) in enumerate(splits):
            model, _ = solve(cfg, train, basis)
            scores[i, k] = gradient_norm_measure(model, held)
    means = scores.mean(axis=1)
    # first index of the minimum: grid is increasing, so ties go to the smaller lambda
    best = int(np.argmin(means))
    chosen = float(grid[best])
    model, diag = solve(replace(config, lam=chosen), bundle, basis)
    return TuneResult(lam_star, grid, scores, chosen, model, diag, config.seed)
