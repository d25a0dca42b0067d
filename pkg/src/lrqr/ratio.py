"""Likelihood-ratio estimates for the weighted conformal baseline.

A logistic classifier separates unlabelled source (label 0) from target
(label 1) rows; ``r(x) = p(x) / (1 - p(x))``, optionally multiplied by
``n_source / n_target`` to undo the class prior.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

PROB_CLIP = 1e-12


@dataclass(frozen=True)
class RatioModel:
    """Fitted domain classifier. ``weights[0]`` is the intercept."""

    weights: np.ndarray
    prior_correction: bool = True
    n_source: int = 1
    n_target: int = 1
    center: np.ndarray | None = None
    scale: np.ndarray | None = None
    loss_trace: list = field(default_factory=list, compare=False, repr=False)
    grad_norm: float = float("nan")

    def _design(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X[None, :]
        if X.shape[1] != self.weights.shape[0] - 1:
            raise ValueError(f"expected {self.weights.shape[0] - 1} features, got {X.shape[1]}")
        if self.center is not None:
            X = (X - self.center) / self.scale
        return np.hstack([np.ones((X.shape[0], 1)), X])

    def predict_proba(self, X) -> np.ndarray:
        """Clamped probability that each row came from the target."""
        p = expit(self._design(X) @ self.weights)
        return np.clip(p, PROB_CLIP, 1.0 - PROB_CLIP)

    def ratio(self, X) -> np.ndarray:
        p = self.predict_proba(X)
        r = p / (1.0 - p)
        if self.prior_correction:
            r = r * (self.n_source / self.n_target)
        return r

    def to_dict(self) -> dict:
        return {
            "weights": [float(v) for v in self.weights],
            "prior_correction": self.prior_correction,
            "n_source": self.n_source,
            "n_target": self.n_target,
            "center": None if self.center is None else [float(v) for v in self.center],
            "scale": None if self.scale is None else [float(v) for v in self.scale],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RatioModel":
        arr = (lambda v: None if v is None else np.asarray(v, dtype=float))
        return cls(np.asarray(d["weights"], dtype=float), bool(d["prior_correction"]),
                   int(d["n_source"]), int(d["n_target"]), arr(d.get("center")),
                   arr(d.get("scale")))


def _penalized_nll(w, A, y, l2):
    z = A @ w
    # log(1 + exp(z)) - y z, computed stably
    nll = np.mean(np.logaddexp(0.0, z) - y * z)
    return nll + 0.5 * l2 * (w[1:] @ w[1:])


def _penalized_grad(w, A, y, l2):
    g = A.T @ (expit(A @ w) - y) / A.shape[0]
    g[1:] += l2 * w[1:]
    return g


def fit_domain_classifier(source_phi, target_phi, l2_penalty: float = 1e-4, *,
                          standardize: bool = False, prior_correction: bool = True,
                          tol: float = 1e-6, max_iter: int = 5000) -> RatioModel:
    """L2-penalised logistic regression of target (1) against source (0).

    Minimised by gradient descent with Barzilai-Borwein trial steps and
    Armijo backtracking, so the penalised loss never increases. Stops when
    the gradient norm is at most ``tol`` or after ``max_iter`` steps. The
    intercept is not penalised.
    """
    S = np.asarray(source_phi, dtype=float)
    T = np.asarray(target_phi, dtype=float)
    if S.ndim != 2 or T.ndim != 2 or S.shape[0] == 0 or T.shape[0] == 0:
        raise ValueError("source and target must be non-empty 2-D arrays")
    if S.shape[1] != T.shape[1]:
        raise ValueError("source and target have different column counts")
    if l2_penalty < 0:
        raise ValueError("l2_penalty must be non-negative")
    X = np.vstack([S, T])
    y = np.concatenate([np.zeros(S.shape[0]), np.ones(T.shape[0])])
    center = scale = None
    if standardize:
        center = S.mean(axis=0)
        scale = S.std(axis=0)
        scale = np.where(scale > 0, scale, 1.0)
        X = (X - center) / scale
    A = np.hstack([np.ones((X.shape[0], 1)), X])
    w = np.zeros(A.shape[1])
    f = _penalized_nll(w, A, y, l2_penalty)
    g = _penalized_grad(w, A, y, l2_penalty)
    # Lipschitz bound of the gradient, used for the first step
    lip = 0.25 * np.linalg.eigvalsh(A.T @ A / A.shape[0])[-1] + l2_penalty
    step = 1.0 / lip
    trace = [f]
    for _ in range(max_iter):
        gnorm = np.linalg.norm(g)
        if gnorm <= tol:
            break
        t = step
        while True:
            w_new = w - t * g
            f_new = _penalized_nll(w_new, A, y, l2_penalty)
            if f_new <= f - 1e-4 * t * gnorm * gnorm or t < 1e-20:
                break
            t *= 0.5
        if f_new > f:
            break
        g_new = _penalized_grad(w_new, A, y, l2_penalty)
        dw, dg = w_new - w, g_new - g
        curv = dw @ dg
        step = (dw @ dw) / curv if curv > 0 else 1.0 / lip
        w, f, g = w_new, f_new, g_new
        trace.append(f)
    return RatioModel(w, prior_correction, S.shape[0], T.shape[0], center, scale,
                      trace, float(np.linalg.norm(g)))


def ratio_at(model: RatioModel, phi_x) -> float:
    """Estimated likelihood ratio at a single feature vector."""
    x = np.asarray(phi_x, dtype=float).reshape(-1)
    return float(model.ratio(x[None, :])[0])


def oracle_gaussian_ratio(mu, x) -> float:
    """Density ratio of ``N(mu, I)`` to ``N(0, I)`` at ``x``."""
    mu = np.asarray(mu, dtype=float).reshape(-1)
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != mu.shape[0]:
        raise ValueError(f"x has dimension {x.shape[-1]}, mu has {mu.shape[0]}")
    out = np.exp(x @ mu - 0.5 * mu @ mu)
    return float(out) if np.ndim(out) == 0 else out
