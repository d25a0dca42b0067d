"""Empirical LR-QR objective and its constrained minimiser.

The objective for a threshold ``h = <gamma, Phi>`` and scalar ``beta`` is::

    L(h, beta) = E1[pinball(h(X), S)] + lam * E3[beta^2 h^2] - lam * E2[2 beta h]

with ``E1`` over labelled source rows, ``E2`` over unlabelled target rows and
``E3`` over unlabelled source rows. It is minimised over the box
``||gamma|| <= B``, ``beta in [beta_min, beta_max]`` by alternating an exact
clipped ``beta`` step with an exact ``gamma`` step for fixed ``beta``.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import lsq_linear

from . import kernels
from .basis import Basis, Hypothesis, ShapeError
from .loss import check_alpha


class DegenerateHypothesisError(ValueError):
    """The hypothesis vanishes on every unlabelled source row."""


def _as_matrix(a, name: str) -> np.ndarray:
    a = np.ascontiguousarray(a, dtype=np.float64)
    if a.ndim != 2:
        raise ShapeError(f"{name} must be 2-D, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError(f"{name} contains non-finite values")
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class CalibrationBundle:
    """Basis-evaluated calibration samples.

    ``s1_phi``/``s1_scores`` are the labelled source rows, ``s2_phi`` the
    unlabelled target rows and ``s3_phi`` the unlabelled source rows.
    """

    s1_phi: np.ndarray
    s1_scores: np.ndarray
    s2_phi: np.ndarray
    s3_phi: np.ndarray
    bounded_scores: bool = False

    def __post_init__(self):
        s1 = _as_matrix(self.s1_phi, "s1_phi")
        s2 = _as_matrix(self.s2_phi, "s2_phi")
        s3 = _as_matrix(self.s3_phi, "s3_phi")
        scores = np.ascontiguousarray(self.s1_scores, dtype=np.float64).reshape(-1)
        if not np.all(np.isfinite(scores)):
            raise ValueError("s1_scores contains non-finite values")
        scores.setflags(write=False)
        for name, m in (("S1", s1), ("S2", s2), ("S3", s3)):
            if m.shape[0] < 1:
                raise ValueError(f"{name} is empty")
        if not (s1.shape[1] == s2.shape[1] == s3.shape[1]):
            raise ShapeError("all samples must share the basis dimension")
        if scores.shape[0] != s1.shape[0]:
            raise ShapeError("s1_scores length differs from s1_phi rows")
        if self.bounded_scores and (scores.min() < 0 or scores.max() > 1):
            raise ValueError("bounded_scores requires scores in [0, 1]")
        object.__setattr__(self, "s1_phi", s1)
        object.__setattr__(self, "s2_phi", s2)
        object.__setattr__(self, "s3_phi", s3)
        object.__setattr__(self, "s1_scores", scores)

    @classmethod
    def from_features(cls, basis: Basis, X1, scores, X2, X3, **kw) -> "CalibrationBundle":
        return cls(basis.evaluate(X1), scores, basis.evaluate(X2), basis.evaluate(X3), **kw)

    @property
    def n1(self) -> int:
        return self.s1_phi.shape[0]

    @property
    def n2(self) -> int:
        return self.s2_phi.shape[0]

    @property
    def n3(self) -> int:
        return self.s3_phi.shape[0]

    @property
    def dim(self) -> int:
        return self.s1_phi.shape[1]

    def subset(self, i1, i2, i3) -> "CalibrationBundle":
        return CalibrationBundle(self.s1_phi[i1], self.s1_scores[i1],
                                 self.s2_phi[i2], self.s3_phi[i3], self.bounded_scores)

    def with_scores(self, scores) -> "CalibrationBundle":
        return CalibrationBundle(self.s1_phi, scores, self.s2_phi, self.s3_phi,
                                 self.bounded_scores)


@dataclass(frozen=True)
class LrqrConfig:
    """Fitting configuration. ``B=None`` selects ``10 * ||gamma_0|| + 10``."""

    alpha: float = 0.1
    lam: float = 0.0
    B: float | None = None
    beta_min: float = 1e-3
    beta_max: float = 1e3
    max_outer: int = 200
    max_inner: int = 500
    step0: float = 0.1
    tol_stationarity: float = 1e-4
    tol_objective: float = 1e-8
    seed: int = 0
    normalize_scores: bool = False

    def __post_init__(self):
        check_alpha(self.alpha)
        if not (self.lam >= 0 and np.isfinite(self.lam)):
            raise ValueError("lambda must be a finite non-negative number")
        if self.B is not None and not self.B > 0:
            raise ValueError("B must be positive")
        if not (0 < self.beta_min <= self.beta_max):
            raise ValueError("need 0 < beta_min <= beta_max")
        if self.max_outer < 1 or self.max_inner < 0:
            raise ValueError("iteration limits must be positive")
        if not (self.step0 > 0 and self.tol_stationarity > 0 and self.tol_objective > 0):
            raise ValueError("step0 and tolerances must be positive")

    def to_dict(self) -> dict:
        d = {k: getattr(self, k) for k in self.__dataclass_fields__}
        d["lambda"] = d.pop("lam")
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "LrqrConfig":
        d = dict(d)
        if "lambda" in d:
            d["lam"] = d.pop("lambda")
        return cls(**{k: v for k, v in d.items() if k in cls.__dataclass_fields__})


@dataclass(frozen=True)
class ThresholdModel:
    """Fitted threshold ``h(x) = shift + scale * <gamma, Phi(x)>``.

    ``score_shift``/``score_scale`` are the identity unless the scores were
    min-max normalised before fitting; ``gamma`` and ``beta`` live in the
    normalised units.
    """

    basis: Basis
    gamma: Hypothesis
    beta: float
    lam: float
    alpha: float
    score_shift: float = 0.0
    score_scale: float = 1.0

    def __post_init__(self):
        if not isinstance(self.gamma, Hypothesis):
            object.__setattr__(self, "gamma", Hypothesis(self.gamma))
        if self.gamma.gamma.shape[0] != self.basis.dim:
            raise ShapeError("gamma length differs from basis dimension")

    @property
    def coef(self) -> np.ndarray:
        return self.gamma.gamma

    def h_phi(self, phi) -> np.ndarray:
        """Internal-unit threshold on basis-evaluated rows."""
        return np.asarray(phi, dtype=float) @ self.coef

    def threshold_phi(self, phi) -> np.ndarray:
        return self.score_shift + self.score_scale * self.h_phi(phi)

    def threshold(self, X) -> np.ndarray:
        """Thresholds on raw feature rows, in score units."""
        return self.threshold_phi(self.basis.evaluate(X))

    def to_dict(self) -> dict:
        return {
            "basis": self.basis.to_dict(),
            "gamma": [float(v) for v in self.coef],
            "beta": float(self.beta),
            "lambda": float(self.lam),
            "alpha": float(self.alpha),
            "score_shift": float(self.score_shift),
            "score_scale": float(self.score_scale),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ThresholdModel":
        return cls(Basis.from_dict(d["basis"]), Hypothesis(d["gamma"]), float(d["beta"]),
                   float(d["lambda"]), float(d["alpha"]),
                   float(d.get("score_shift", 0.0)), float(d.get("score_scale", 1.0)))


@dataclass
class SolveDiagnostics:
    outer_iters: int
    final_objective: float
    stationarity_residual: float
    objective_trace: list = field(default_factory=list)
    converged: bool = False
    ball_active: bool = False
    beta_at_bound: bool = False
    radius: float = float("nan")

    def to_dict(self) -> dict:
        return {
            "outer_iters": self.outer_iters,
            "final_objective": self.final_objective,
            "stationarity_residual": self.stationarity_residual,
            "objective_trace": list(self.objective_trace),
            "converged": self.converged,
            "ball_active": self.ball_active,
            "beta_at_bound": self.beta_at_bound,
            "radius": self.radius,
        }


# ---------------------------------------------------------------------------
# objective pieces

def _internal_scores(model: ThresholdModel, bundle: CalibrationBundle) -> np.ndarray:
    if model.score_shift == 0.0 and model.score_scale == 1.0:
        return bundle.s1_scores
    return (bundle.s1_scores - model.score_shift) / model.score_scale


def _check_shapes(model: ThresholdModel, bundle: CalibrationBundle):
    if bundle.dim != model.basis.dim:
        raise ShapeError(f"bundle has {bundle.dim} basis columns, model expects {model.basis.dim}")


def empirical_objective(model: ThresholdModel, bundle: CalibrationBundle) -> float:
    """Empirical LR-QR objective at ``(model.gamma, model.beta)``."""
    _check_shapes(model, bundle)
    alpha, lam, beta = model.alpha, model.lam, model.beta
    s = _internal_scores(model, bundle)
    h1 = model.h_phi(bundle.s1_phi)
    diff = s - h1
    pin = np.where(diff >= 0, (1.0 - alpha) * diff, -alpha * diff).mean()
    h2 = model.h_phi(bundle.s2_phi)
    h3 = model.h_phi(bundle.s3_phi)
    val = pin + lam * np.mean(beta * beta * h3 * h3) - lam * np.mean(2.0 * beta * h2)
    if not np.isfinite(val):
        raise ValueError("objective is not finite")
    return float(val)


def empirical_gradient(model: ThresholdModel, bundle: CalibrationBundle):
    """Gradient in ``(gamma, beta)``; the pinball part uses a closed indicator."""
    _check_shapes(model, bundle)
    alpha, lam, beta = model.alpha, model.lam, model.beta
    s = _internal_scores(model, bundle)
    h1 = model.h_phi(bundle.s1_phi)
    h2 = model.h_phi(bundle.s2_phi)
    h3 = model.h_phi(bundle.s3_phi)
    w = (s <= h1).astype(float) - (1.0 - alpha)
    g_gamma = (w @ bundle.s1_phi) / bundle.n1
    g_gamma = g_gamma + 2.0 * lam * beta * beta * (h3 @ bundle.s3_phi) / bundle.n3
    g_gamma = g_gamma - 2.0 * lam * beta * bundle.s2_phi.mean(axis=0)
    g_beta = 2.0 * lam * beta * np.mean(h3 * h3) - 2.0 * lam * np.mean(h2)
    return g_gamma, float(g_beta)


def beta_star(hyp, bundle: CalibrationBundle, beta_min: float, beta_max: float) -> float:
    """Exact minimiser in ``beta`` for fixed ``h``, clipped to ``[beta_min, beta_max]``."""
    gamma = hyp.gamma if isinstance(hyp, Hypothesis) else np.asarray(hyp, dtype=float)
    h2 = bundle.s2_phi @ gamma
    h3 = bundle.s3_phi @ gamma
    denom = float(np.mean(h3 * h3))
    if not np.isfinite(denom):
        raise ValueError("E3[h^2] is not finite")
    if denom == 0.0:
        raise DegenerateHypothesisError("h vanishes on every unlabelled source row")
    return float(np.clip(np.mean(h2) / denom, beta_min, beta_max))


def gradient_norm_measure(model: ThresholdModel, heldout: CalibrationBundle,
                          ties: str = "closed") -> float:
    """l2 norm of the LR-QR gradient on a (held-out) bundle.

    ``ties="closed"`` uses :func:`empirical_gradient` as is. ``ties="min_norm"``
    lets rows lying exactly on the threshold take any pinball subgradient and
    reports the smallest resulting norm; on tie-free data both agree.
    """
    g_gamma, g_beta = empirical_gradient(model, heldout)
    if ties == "closed":
        return float(np.sqrt(g_gamma @ g_gamma + g_beta * g_beta))
    if ties != "min_norm":
        raise ValueError(f"unknown tie mode {ties!r}")
    g_gamma, tied = _covered_ties(model, heldout, g_gamma)
    res = _min_norm_subgradient(g_gamma, heldout.s1_phi[tied], heldout.n1, None)
    return float(np.hypot(res, g_beta))


# ---------------------------------------------------------------------------
# stationarity

def _tie_tol(scores: np.ndarray) -> float:
    return 1e-9 * max(1.0, float(np.max(np.abs(scores))) if scores.size else 1.0)


def _covered_ties(model: ThresholdModel, bundle: CalibrationBundle, g_gamma):
    """Tied rows and a gradient in which every tied row counts as covered.

    A row within the tie tolerance but numerically above the threshold enters
    the closed-indicator gradient as uncovered; moving it to the covered value
    lets all ties share the multiplier range ``[-1, 0]``.
    """
    s = _internal_scores(model, bundle)
    h = model.h_phi(bundle.s1_phi)
    tied = np.abs(s - h) <= _tie_tol(s)
    above = tied & (s > h)
    if np.any(above):
        g_gamma = g_gamma + bundle.s1_phi[above].sum(axis=0) / bundle.n1
    return g_gamma, tied


def _min_norm_subgradient(g_closed, phi_ties, n1, ball_dir) -> float:
    """Smallest norm of ``g_closed + sum_i t_i phi_i / n1 + tau * ball_dir``.

    ``t_i in [-1, 0]`` shifts a tied row from the closed-indicator value
    ``alpha`` anywhere down to ``-(1 - alpha)``; ``tau >= 0`` is the ball
    multiplier (omitted when ``ball_dir`` is None).
    """
    cols = []
    lo, hi = [], []
    if phi_ties.shape[0]:
        cols.append(phi_ties.T / n1)
        lo += [-1.0] * phi_ties.shape[0]
        hi += [0.0] * phi_ties.shape[0]
    if ball_dir is not None:
        cols.append(np.asarray(ball_dir, dtype=float).reshape(-1, 1))
        lo.append(0.0)
        hi.append(np.inf)
    if not cols:
        return float(np.linalg.norm(g_closed))
    A = np.hstack(cols)
    lo = np.array(lo)
    hi = np.array(hi)
    x, *_ = np.linalg.lstsq(A, -g_closed, rcond=None)
    if np.all(x >= lo) and np.all(x <= hi):
        return float(np.linalg.norm(A @ x + g_closed))
    sol = lsq_linear(A, -g_closed, bounds=(lo, hi), method="bvls")
    return float(np.linalg.norm(A @ sol.x + g_closed))


def stationarity_residual(model: ThresholdModel, bundle: CalibrationBundle,
                          radius: float, beta_min: float, beta_max: float) -> float:
    """Norm of the minimum-norm projected subgradient at ``model``.

    Rows tied with the threshold contribute their whole pinball
    subdifferential; the ball and ``beta`` bounds contribute their normal
    cones. Zero exactly at a first-order stationary point of the boxed problem.
    """
    g_gamma, g_beta = empirical_gradient(model, bundle)
    g_gamma, tied = _covered_ties(model, bundle, g_gamma)
    on_ball = model.gamma.norm >= radius * (1.0 - 1e-9)
    res_g = _min_norm_subgradient(g_gamma, bundle.s1_phi[tied], bundle.n1,
                                  model.coef if on_ball else None)
    b = model.beta
    if b <= beta_min and b >= beta_max:
        res_b = 0.0
    elif b <= beta_min:
        res_b = max(-g_beta, 0.0)
    elif b >= beta_max:
        res_b = max(g_beta, 0.0)
    else:
        res_b = abs(g_beta)
    return float(np.hypot(res_g, res_b))


# ---------------------------------------------------------------------------
# fixed-beta gamma problem

class _GammaProblem:
    """``min_gamma E1[pinball] + 0.5 gamma'Q gamma - c'gamma`` for fixed beta."""

    def __init__(self, phi, s, sigma, mu2, alpha, lam, beta, ridge=0.0):
        self.phi = phi
        self.s = s
        self.n = phi.shape[0]
        self.alpha = alpha
        self.sigma = sigma
        self.mu2 = mu2
        self.lam = lam
        self.beta = beta
        self.ridge = ridge
        d = phi.shape[1]
        self.Q = 2.0 * lam * beta * beta * sigma + 2.0 * ridge * np.eye(d)
        self.c = 2.0 * lam * beta * mu2
        self.tie_tol = _tie_tol(s)

    def value(self, gamma) -> float:
        loss, _ = kernels.pinball_value_grad(self.phi, self.s, gamma, self.alpha)
        return float(loss + 0.5 * gamma @ self.Q @ gamma - self.c @ gamma)

    def with_ridge(self, ridge: float) -> "_GammaProblem":
        return _GammaProblem(self.phi, self.s, self.sigma, self.mu2, self.alpha,
                             self.lam, self.beta, ridge)

    # active-set method --------------------------------------------------
    def active_set(self, gamma, max_iter: int | None = None) -> np.ndarray:
        """Exact minimiser by a primal active-set method on the kinks.

        Rows on the threshold are held tied while the quadratic restricted to
        that face is minimised with exact line searches; a tie is released
        when its multiplier leaves the pinball subdifferential.
        """
        phi, s, n, alpha = self.phi, self.s, self.n, self.alpha
        d = phi.shape[1]
        gamma = np.array(gamma, dtype=float, copy=True)
        r = s - phi @ gamma
        tied = np.abs(r) <= self.tie_tol
        sign = np.sign(r)
        sign[tied] = 0.0
        scale = 1.0 + np.abs(phi).max() + np.abs(self.Q).max() * (1 + np.abs(gamma).max()) \
            + np.abs(self.c).max()
        gtol = 1e-11 * scale
        if max_iter is None:
            max_iter = 50 * (d + 10) + 2 * n
        last_released = -1
        for _ in range(max_iter):
            ties = np.flatnonzero(tied)
            psi = np.where(sign > 0, -(1.0 - alpha), alpha)
            psi[tied] = 0.0
            g_smooth = self.Q @ gamma - self.c
            g = g_smooth + (psi @ phi) / n
            if ties.size:
                _, sv, vt = np.linalg.svd(phi[ties], full_matrices=True)
                rank = int(np.sum(sv > 1e-10 * sv[0])) if sv.size else 0
                Z = vt[rank:].T
            else:
                Z = np.eye(d)
            zg = Z.T @ g if Z.shape[1] else np.zeros(0)
            if Z.shape[1] == 0 or np.linalg.norm(zg) <= gtol:
                j, new_sign = self._release(g, ties, last_released)
                if j < 0:
                    return gamma
                tied[j] = False
                sign[j] = new_sign
                last_released = j
                continue
            H = Z.T @ self.Q @ Z
            ev, evec = np.linalg.eigh(H)
            coeff = evec.T @ zg
            flat = ev <= 1e-12 * max(1.0, ev.max(initial=0.0))
            w = np.where(flat, -coeff, -coeff / np.where(flat, 1.0, ev))
            direction = Z @ (evec @ w)
            v = phi @ direction
            v[tied] = 0.0
            slope0 = float(g_smooth @ direction)
            curv = float(direction @ self.Q @ direction)
            t, order, n_cross, n_hit = kernels.line_search(
                np.ascontiguousarray(r), np.ascontiguousarray(v), sign, slope0, curv, alpha, n)
            if not np.isfinite(t):
                raise RuntimeError("fixed-beta objective is unbounded below")
            gamma = gamma + t * direction
            crossed = order[:n_cross]
            hit = order[n_cross:n_cross + n_hit]
            sign[crossed] = -sign[crossed]
            tied[hit] = True
            sign[hit] = 0.0
            r = s - phi @ gamma
            r[tied] = 0.0
            last_released = -1
        warnings.warn("active-set method hit its iteration cap", RuntimeWarning, stacklevel=2)
        return gamma

    def _release(self, g, ties, last_released):
        """Pick a tie whose multiplier is infeasible; ``-1`` if optimal."""
        if ties.size == 0:
            return -1, 0.0
        n, alpha = self.n, self.alpha
        A = self.phi[ties].T / n
        g_closed = g + alpha * A.sum(axis=1)
        if _min_norm_subgradient(g_closed, self.phi[ties], n, None) <= 1e-9 * (1.0 + np.linalg.norm(g)):
            return -1, 0.0
        nu, *_ = np.linalg.lstsq(A, -g, rcond=None)
        viol = np.maximum(nu - alpha, -(1.0 - alpha) - nu)
        if last_released >= 0:
            viol[ties == last_released] = -np.inf
        k = int(np.argmax(viol))
        if viol[k] <= 0:
            return -1, 0.0
        return int(ties[k]), (-1.0 if nu[k] > alpha else 1.0)

    # with the norm ball -------------------------------------------------
    def solve(self, gamma, radius: float) -> np.ndarray:
        """Exact minimiser over ``||gamma|| <= radius``.

        If the unconstrained minimiser is outside the ball, the multiplier
        ``mu`` of ``mu * ||gamma||^2`` is found by bisection (the norm of the
        penalised minimiser is non-increasing in ``mu``).
        """
        gamma = self.active_set(gamma)
        if np.linalg.norm(gamma) <= radius:
            return gamma
        lo, hi = 0.0, 1.0
        g_hi = self.with_ridge(hi).active_set(gamma)
        while np.linalg.norm(g_hi) > radius:
            lo, hi = hi, hi * 4.0
            g_hi = self.with_ridge(hi).active_set(g_hi)
        for _ in range(100):
            mid = 0.5 * (lo + hi)
            g_mid = self.with_ridge(mid).active_set(g_hi)
            if np.linalg.norm(g_mid) > radius:
                lo = mid
            else:
                hi, g_hi = mid, g_mid
            if hi - lo <= 1e-13 * hi:
                break
        nrm = np.linalg.norm(g_hi)
        return g_hi * (radius / nrm) if nrm > radius else g_hi


def _gamma_problem(bundle: CalibrationBundle, scores, alpha, lam, beta) -> _GammaProblem:
    sigma = np.ascontiguousarray(bundle.s3_phi.T @ bundle.s3_phi / bundle.n3)
    mu2 = np.ascontiguousarray(bundle.s2_phi.mean(axis=0))
    return _GammaProblem(bundle.s1_phi, np.ascontiguousarray(scores), sigma, mu2,
                         alpha, lam, beta)


def initial_gamma(basis: Basis, bundle: CalibrationBundle, alpha: float, scores=None) -> np.ndarray:
    """Split-conformal start: the constant empirical (1-alpha)-quantile.

    With an intercept column the quantile goes there and all other
    coordinates are zero; otherwise the constant is least-squares projected
    onto the span of the basis over the labelled rows.
    """
    s = bundle.s1_scores if scores is None else scores
    q = float(np.quantile(s, 1.0 - alpha, method="inverted_cdf"))
    gamma = np.zeros(bundle.dim)
    if basis.intercept_index is not None:
        gamma[basis.intercept_index] = q
        return gamma
    sol, *_ = np.linalg.lstsq(bundle.s1_phi, np.full(bundle.n1, q), rcond=None)
    return sol


def solve_fixed_beta(bundle: CalibrationBundle, alpha: float, lam: float, beta: float,
                     radius: float, gamma0, warm_iters: int = 0, step0: float = 0.1) -> np.ndarray:
    """Exact ``argmin_gamma L(gamma, beta)`` over the ``radius`` ball."""
    prob = _gamma_problem(bundle, bundle.s1_scores, alpha, lam, beta)
    return _solve_gamma(prob, np.asarray(gamma0, dtype=float), radius, warm_iters, step0)


def _solve_gamma(prob: _GammaProblem, gamma0, radius, warm_iters, step0):
    start = gamma0
    if warm_iters > 0:
        avg, last = kernels.projected_subgradient(
            prob.phi, prob.s, prob.sigma, prob.mu2, np.ascontiguousarray(gamma0),
            prob.alpha, prob.lam, prob.beta, radius, step0, warm_iters)
        cands = [gamma0, avg, last]
        start = min(cands, key=prob.value)
    gamma = prob.solve(start, radius)
    # an exact block minimiser never loses to its start
    if prob.value(gamma) > prob.value(gamma0):
        gamma = gamma0
    return gamma


def _secant_beta(p0, p1, bmin, bmax):
    """Secant root of ``beta_star(gamma*(beta)) - beta`` through two pairs."""
    (b0, t0), (b1, t1) = p0, p1
    f0, f1 = t0 - b0, t1 - b1
    if f1 == f0 or b1 == b0:
        return None
    cand = b1 - f1 * (b1 - b0) / (f1 - f0)
    if not np.isfinite(cand):
        return None
    return float(np.clip(cand, bmin, bmax))


def solve(config: LrqrConfig, bundle: CalibrationBundle, basis: Basis):
    """Fit LR-QR on ``bundle``; returns ``(ThresholdModel, SolveDiagnostics)``.

    Each outer iteration takes the clipped closed-form ``beta`` step and then
    minimises exactly in ``gamma``. From the third iteration a secant step on
    the fixed-point map ``beta -> beta_star(gamma*(beta))`` is also tried and
    kept only if it lowers the objective further. The first ``gamma`` step is warm-started
    by ``max_inner`` projected subgradient iterations with steps
    ``step0 / sqrt(t)`` and iterate averaging. Non-convergence is reported
    through ``diagnostics.converged``, not raised.
    """
    if bundle.dim != basis.dim:
        raise ShapeError(f"bundle has {bundle.dim} columns, basis has {basis.dim}")
    alpha, lam = config.alpha, config.lam
    shift, scale = 0.0, 1.0
    scores = bundle.s1_scores
    if config.normalize_scores:
        shift = float(scores.min())
        scale = float(scores.max() - shift) or 1.0
        scores = (scores - shift) / scale
    gamma = initial_gamma(basis, bundle, alpha, scores)
    radius = config.B if config.B is not None else 10.0 * float(np.linalg.norm(gamma)) + 10.0
    nrm = np.linalg.norm(gamma)
    if nrm > radius:
        gamma = gamma * (radius / nrm)

    def make(g, b):
        return ThresholdModel(basis, Hypothesis(g), b, lam, alpha, shift, scale)

    bmin, bmax = config.beta_min, config.beta_max
    beta = beta_star(gamma, bundle, bmin, bmax)
    trace = [empirical_objective(make(gamma, beta), bundle)]
    residual = np.inf
    converged = False
    stalls = 0
    it = 0
    # (beta, beta_star(gamma*(beta))) pairs; valid once gamma is a block minimiser
    pairs = []
    for it in range(1, config.max_outer + 1):
        beta_new = beta_star(gamma, bundle, bmin, bmax)
        if it > 1:
            pairs.append((beta, beta_new))
        prob = _gamma_problem(bundle, scores, alpha, lam, beta_new)
        gamma_new = _solve_gamma(prob, gamma, radius,
                                 config.max_inner if it == 1 else 0, config.step0)
        f = empirical_objective(make(gamma_new, beta_new), bundle)
        if len(pairs) >= 2:
            cand = _secant_beta(pairs[-2], pairs[-1], bmin, bmax)
            if cand is not None and cand != beta_new:
                prob_s = _gamma_problem(bundle, scores, alpha, lam, cand)
                gamma_s = _solve_gamma(prob_s, gamma_new, radius, 0, config.step0)
                f_s = empirical_objective(make(gamma_s, cand), bundle)
                if f_s < f:
                    beta_new, gamma_new, f = cand, gamma_s, f_s
        beta, gamma = beta_new, gamma_new
        model = make(gamma, beta)
        improvement = trace[-1] - f
        trace.append(f)
        residual = stationarity_residual(model, bundle, radius,
                                         config.beta_min, config.beta_max)
        if residual <= config.tol_stationarity:
            converged = True
            break
        stalls = stalls + 1 if improvement < config.tol_objective else 0
        if stalls >= 3:
            break
    model = make(gamma, beta)
    ball_active = bool(np.linalg.norm(gamma) >= radius * (1 - 1e-9))
    beta_bound = bool(beta <= config.beta_min or beta >= config.beta_max)
    if ball_active or beta_bound:
        warnings.warn("LR-QR solution touches the constraint box "
                      f"(ball={ball_active}, beta bound={beta_bound})", RuntimeWarning,
                      stacklevel=2)
    diag = SolveDiagnostics(it, trace[-1], float(residual), trace, converged,
                            ball_active, beta_bound, float(radius))
    return model, diag


# ---------------------------------------------------------------------------
# diagnostics and serialisation

def regularizer_value(model: ThresholdModel, bundle: CalibrationBundle,
                      beta_min: float = 0.0, beta_max: float = np.inf) -> float:
    """``min_beta E3[beta^2 h^2] - 2 E2[beta h]`` over ``[beta_min, beta_max]``."""
    h2 = model.h_phi(bundle.s2_phi)
    h3 = model.h_phi(bundle.s3_phi)
    a = float(np.mean(h3 * h3))
    b = float(np.mean(h2))
    if a == 0.0:
        return 0.0
    beta = float(np.clip(b / a, beta_min, beta_max))
    return beta * beta * a - 2.0 * beta * b


def minimizer_lipschitz_constant(bundle: CalibrationBundle, radius: float,
                                 beta_min: float, beta_max: float) -> float:
    """Lipschitz constant of ``beta -> argmin_gamma L(gamma, beta)``.

    Uses the eigenvalues of ``Sigma = E3[Phi Phi^T]`` and
    ``C_Phi = max ||Phi(x)||`` over all rows of the bundle.
    """
    sigma = bundle.s3_phi.T @ bundle.s3_phi / bundle.n3
    ev = np.linalg.eigvalsh(sigma)
    lmin, lmax = float(ev[0]), float(ev[-1])
    if lmin <= 0:
        return float("inf")
    c_phi = max(float(np.linalg.norm(m, axis=1).max())
                for m in (bundle.s1_phi, bundle.s2_phi, bundle.s3_phi))
    return ((2 * beta_max * lmax * radius + c_phi) + 4 * beta_max * lmax * radius) \
        / (beta_min ** 2 * lmin)


def save_model(path, model: ThresholdModel, diagnostics: SolveDiagnostics | None = None,
               extra: dict | None = None):
    """Write ``{basis, gamma, beta, lambda, alpha, diagnostics}`` as JSON.

    Floats are written with ``repr`` precision, so ``gamma`` and ``beta``
    round-trip bit-exactly.
    """
    doc = model.to_dict()
    doc["diagnostics"] = None if diagnostics is None else diagnostics.to_dict()
    if extra:
        doc.update(extra)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, allow_nan=True)
        fh.write("\n")


def load_model(path) -> ThresholdModel:
    with open(path, encoding="utf-8") as fh:
        return ThresholdModel.from_dict(json.load(fh))


__all__ = [
    "CalibrationBundle", "LrqrConfig", "ThresholdModel", "SolveDiagnostics",
    "DegenerateHypothesisError", "empirical_objective", "empirical_gradient",
    "beta_star", "gradient_norm_measure", "stationarity_residual", "solve",
    "solve_fixed_beta", "initial_gamma", "regularizer_value",
    "minimizer_lipschitz_constant", "save_model", "load_model",
]
