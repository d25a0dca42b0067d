import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from lrqr.baselines import (split_conformal_threshold, weighted_conformal_threshold,
                            weighted_conformal_thresholds)

from oracles import split_conformal_ref, weighted_conformal_ref

score_lists = st.lists(st.floats(-50, 50), min_size=1, max_size=40)
levels = st.sampled_from([0.05, 0.1, 0.2, 0.5, 0.6])


class TestSplit:
    def test_examples(self):
        scores = np.arange(1, 11) / 10
        assert split_conformal_threshold(scores, 0.1) == 1.0
        assert split_conformal_threshold([0.3], 0.1) == math.inf
        assert split_conformal_threshold([0.5], 0.6) == 0.5

    def test_empty(self):
        with pytest.raises(ValueError):
            split_conformal_threshold([], 0.1)

    @given(score_lists, levels)
    def test_matches_enumeration(self, scores, alpha):
        assert split_conformal_threshold(scores, alpha) == split_conformal_ref(scores, alpha)

    @given(score_lists)
    def test_monotone_in_level(self, scores):
        vals = [split_conformal_threshold(scores, a) for a in (0.5, 0.3, 0.2, 0.1, 0.05)]
        assert all(a <= b for a, b in zip(vals, vals[1:]))

    def test_marginal_validity(self):
        rng = np.random.default_rng(0)
        n, reps, alpha = 49, 2000, 0.1
        hits = []
        for _ in range(reps):
            s = rng.exponential(size=n + 1)
            hits.append(s[-1] <= split_conformal_threshold(s[:-1], alpha))
        cov = np.mean(hits)
        se = np.sqrt(cov * (1 - cov) / reps)
        assert 1 - alpha - 2 * se <= cov <= 1 - alpha + 1 / (n + 1) + 2 * se


class TestWeighted:
    def test_example(self):
        assert weighted_conformal_threshold([0.3, 0.6], [1, 3], 0.0, 0.2) == 0.6

    def test_mass_at_infinity(self):
        assert weighted_conformal_threshold([0.1, 0.2], [1, 1], 100.0, 0.1) == math.inf

    @settings(max_examples=200)
    @given(score_lists, levels, st.floats(0.01, 100))
    def test_equal_weights_reduce_exactly(self, scores, alpha, w):
        n = len(scores)
        assert weighted_conformal_threshold(scores, [w] * n, w, alpha) == \
            split_conformal_threshold(scores, alpha)

    @settings(max_examples=200)
    @given(st.lists(st.tuples(st.floats(-10, 10), st.floats(0.01, 10)), min_size=1,
                    max_size=30), st.floats(0.0, 10.0), levels)
    def test_matches_enumeration(self, pairs, tw, alpha):
        s = [p[0] for p in pairs]
        w = [p[1] for p in pairs]
        got = weighted_conformal_threshold(s, w, tw, alpha)
        ref = weighted_conformal_ref(s, w, tw, alpha)
        # the oracle works in normalised units with a 1e-12 guard; allow the
        # neighbouring order statistic only when the mass sits on the boundary
        if got != ref:
            total = sum(w) + tw
            mass = sum(wi for si, wi in zip(s, w) if si <= min(got, ref)) / total
            assert abs(mass - (1 - alpha)) < 1e-9
        else:
            assert got == ref

    def test_vectorised_agrees(self):
        rng = np.random.default_rng(1)
        s, w = rng.normal(size=50), rng.exponential(size=50)
        tw = rng.exponential(size=40) * 3
        got = weighted_conformal_thresholds(s, w, tw, 0.1)
        np.testing.assert_array_equal(got, [weighted_conformal_threshold(s, w, t, 0.1)
                                            for t in tw])

    @pytest.mark.parametrize("w", [[1.0, 0.0], [1.0, -1.0], [1.0, np.nan]])
    def test_bad_weights(self, w):
        with pytest.raises(ValueError):
            weighted_conformal_threshold([0.1, 0.2], w, 1.0, 0.1)

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            weighted_conformal_threshold([0.1, 0.2], [1.0], 1.0, 0.1)

    def test_monotone_in_level(self):
        rng = np.random.default_rng(2)
        s, w = rng.normal(size=30), rng.exponential(size=30)
        vals = [weighted_conformal_threshold(s, w, 0.5, a) for a in (0.5, 0.3, 0.1, 0.05)]
        assert all(a <= b for a, b in zip(vals, vals[1:]))
