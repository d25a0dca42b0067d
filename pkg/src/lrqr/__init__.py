"""Likelihood-ratio regularized quantile regression."""

__version__ = "0.1.0"

from .basis import Basis, Hypothesis, ShapeError, eval_basis, eval_h
from .baselines import (split_conformal_threshold, weighted_conformal_threshold,
                        weighted_conformal_thresholds)
from .kernels import BACKEND
from .loss import pinball, pinball_subgrad
from .ratio import RatioModel, fit_domain_classifier, oracle_gaussian_ratio, ratio_at
from .solver import (CalibrationBundle, DegenerateHypothesisError, LrqrConfig,
                     SolveDiagnostics, ThresholdModel, beta_star, empirical_gradient,
                     empirical_objective, gradient_norm_measure, load_model, save_model,
                     solve, stationarity_residual)
from .tuning import TuneResult, cross_validate, lambda_grid, lambda_star

__all__ = [
    "BACKEND", "Basis", "Hypothesis", "ShapeError", "eval_basis", "eval_h",
    "split_conformal_threshold", "weighted_conformal_threshold",
    "weighted_conformal_thresholds", "pinball", "pinball_subgrad", "RatioModel",
    "fit_domain_classifier", "oracle_gaussian_ratio", "ratio_at", "CalibrationBundle",
    "DegenerateHypothesisError", "LrqrConfig", "SolveDiagnostics", "ThresholdModel",
    "beta_star", "empirical_gradient", "empirical_objective", "gradient_norm_measure",
    "load_model", "save_model", "solve", "stationarity_residual", "TuneResult",
    "cross_validate", "lambda_grid", "lambda_star",
]
