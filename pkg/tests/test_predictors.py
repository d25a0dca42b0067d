import math

import numpy as np
import pytest

from lrqr.predictors import (RidgeModel, SingularSystemError, ridge_cv_fit, ridge_fit,
                             score_abs_residual, score_neg_log_prob, score_one_minus_prob)


class TestRidge:
    def test_infinite_shrinkage(self):
        rng = np.random.default_rng(0)
        X, y = rng.normal(size=(50, 3)), rng.normal(size=50) + 4
        m = ridge_fit(X, y, 1e12)
        np.testing.assert_allclose(m.coefficients, 0, atol=1e-9)
        assert m.intercept == pytest.approx(y.mean(), abs=1e-8)

    def test_hand_solved_two_by_two(self):
        # after centring these rows are (+-1/2, +-1/2), so X'X = I
        X = np.array([[1.0, 0.0], [0.0, 1.0], [0.0, 0.0], [1.0, 1.0]])
        y = np.array([1.0, 2.0, 0.0, 3.0])
        # y = x1 + 2 x2 exactly; at penalty 0 the fit is exact
        m = ridge_fit(X, y, 0.0)
        np.testing.assert_allclose(m.coefficients, [1.0, 2.0], atol=1e-12)
        assert m.intercept == pytest.approx(0.0, abs=1e-12)
        # with penalty 1: centred X'X = I, X'y = (1, 2) -> b = (1, 2) / 2
        m = ridge_fit(X, y, 1.0)
        np.testing.assert_allclose(m.coefficients, [0.5, 1.0], atol=1e-12)
        assert m.intercept == pytest.approx(1.5 - 0.5 * 0.5 - 1.0 * 0.5, abs=1e-12)

    def test_normal_equations(self):
        rng = np.random.default_rng(1)
        X, y = rng.normal(size=(80, 5)), rng.normal(size=80)
        m = ridge_fit(X, y, 0.3)
        Xc = X - X.mean(axis=0)
        lhs = (Xc.T @ Xc + 0.3 * np.eye(5)) @ m.coefficients
        rhs = Xc.T @ (y - y.mean())
        assert np.linalg.norm(lhs - rhs) <= 1e-8 * np.linalg.norm(rhs)

    def test_errors(self):
        with pytest.raises(ValueError):
            ridge_fit(np.zeros((0, 2)), np.zeros(0), 1.0)
        with pytest.raises(SingularSystemError):
            ridge_fit(np.ones((5, 2)), np.arange(5.0), 0.0)
        with pytest.raises(ValueError):
            ridge_fit(np.ones((5, 2)), np.arange(5.0), -1.0)

    def test_predict_shape(self):
        m = RidgeModel(np.array([1.0, 2.0]), 0.5, 0.0)
        assert m.predict([1.0, 1.0])[0] == 3.5
        with pytest.raises(ValueError):
            m.predict([[1.0]])


class TestRidgeCV:
    def test_singleton_grid(self):
        rng = np.random.default_rng(2)
        X, y = rng.normal(size=(40, 2)), rng.normal(size=40)
        assert ridge_cv_fit(X, y, [0.7]).penalty == 0.7

    def test_noise_prefers_shrinkage_and_reproducible(self):
        rng = np.random.default_rng(3)
        X, y = rng.normal(size=(60, 20)), rng.normal(size=60)
        m1 = ridge_cv_fit(X, y, seed=4)
        m2 = ridge_cv_fit(X, y, seed=4)
        assert m1.penalty == m2.penalty
        assert m1.penalty >= 1.0

    def test_signal_prefers_small_penalty(self):
        rng = np.random.default_rng(5)
        X = rng.normal(size=(200, 3))
        y = X @ [3.0, -2.0, 1.0] + 0.01 * rng.normal(size=200)
        assert ridge_cv_fit(X, y).penalty <= 1.0

    def test_errors(self):
        X, y = np.ones((3, 1)), np.ones(3)
        with pytest.raises(ValueError):
            ridge_cv_fit(X, y, folds=5)
        with pytest.raises(ValueError):
            ridge_cv_fit(np.ones((10, 1)), np.ones(10), penalty_grid=[])


class TestScores:
    def test_abs_residual(self):
        m = RidgeModel(np.array([0.0]), 2.0, 0.0)
        assert score_abs_residual(m, [1.0], 2.0) == 0.0
        assert score_abs_residual(m, [1.0], 3.0) == 1.0
        assert score_abs_residual(m, [1.0], 0.0) == 2.0
        np.testing.assert_array_equal(score_abs_residual(m, [[0.0], [0.0]], [1.0, 5.0]),
                                      [1.0, 3.0])

    def test_neg_log_prob(self):
        assert score_neg_log_prob([1.0, 0.0, 0.0], 0) == 0.0
        assert score_neg_log_prob([0.25] * 4, 2) == pytest.approx(1.38629, abs=1e-5)
        assert score_neg_log_prob([1.0, 0.0], 1) == math.inf
        assert score_neg_log_prob([1.0, 0.0], 1, cap=50.0) == 50.0

    def test_one_minus_prob(self):
        assert score_one_minus_prob([0.7, 0.2, 0.1], 1) == pytest.approx(0.8)
        v = score_one_minus_prob(np.array([[0.7, 0.3], [0.1, 0.9]]), [0, 0])
        np.testing.assert_allclose(v, [0.3, 0.9])
        assert np.all((v >= 0) & (v <= 1))

    def test_invalid_probs(self):
        with pytest.raises(ValueError):
            score_one_minus_prob([0.5, 0.6], 0)
        with pytest.raises(ValueError):
            score_neg_log_prob([-0.1, 1.1], 0)
