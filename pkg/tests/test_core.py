import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from adpue.core import (
    EPS,
    ColumnMissingError,
    LabeledSampleSet,
    LinearScorer,
    classify,
    log_loss,
    logistic,
)


class TestLogistic:
    def test_known_values(self):
        assert logistic(0.0) == 0.5
        assert logistic(1e9) == 1.0 - EPS
        assert logistic(-1e9) == EPS
        assert logistic(math.log(3.0)) == pytest.approx(0.75, abs=1e-15)

    def test_rejects_non_finite(self):
        with pytest.raises(ValueError):
            logistic(np.inf)
        with pytest.raises(ValueError):
            logistic(np.array([0.0, np.nan]))

    @given(st.floats(-15, 15))
    def test_symmetry(self, z):
        assert logistic(z) + logistic(-z) == pytest.approx(1.0, abs=1e-12)

    def test_array_in_array_out(self):
        out = logistic(np.array([-2.0, 0.0, 2.0]))
        assert out.shape == (3,)
        assert np.all((out >= EPS) & (out <= 1 - EPS))


class TestLogLoss:
    def test_hand_values(self):
        assert log_loss(0.5, 1) == pytest.approx(0.693147, abs=1e-6)
        assert log_loss(0.25, 0) == pytest.approx(0.287682, abs=1e-6)
        assert log_loss(1 - EPS, 1) == pytest.approx(EPS, rel=1e-6)

    def test_convex_in_score(self):
        z = np.linspace(-10, 10, 2001)
        h = z[1] - z[0]
        for label in (0, 1):
            l = log_loss(logistic(z), label)
            second = (l[2:] - 2 * l[1:-1] + l[:-2]) / h**2
            assert second.min() >= -1e-8

    @given(st.floats(EPS, 1 - EPS), st.sampled_from([0, 1]))
    def test_nonnegative(self, f, z):
        assert log_loss(f, z) >= 0.0


class TestClassify:
    def test_threshold(self):
        assert classify(0.5) == 1
        assert classify(0.4999) == 0
        assert classify(1 - EPS) == 1

    @given(st.floats(EPS, 1 - EPS), st.floats(EPS, 1 - EPS))
    def test_monotone(self, f, g):
        if np.sign(f - 0.5) == np.sign(g - 0.5):
            assert classify(f) == classify(g)


class TestLabeledSampleSet:
    def test_observation_invariants(self):
        X = np.zeros((3, 2))
        with pytest.raises(ValueError, match="w = 1 requires e = 1"):
            LabeledSampleSet(X, w=[1, 0, 0], e=[0, 0, 0])
        with pytest.raises(ValueError, match="e \\* y_oracle"):
            LabeledSampleSet(X, w=[0, 0, 0], e=[1, 0, 0], y_oracle=[1, 0, 0])
        with pytest.raises(ValueError, match="length"):
            LabeledSampleSet(X, w=[0, 1])
        with pytest.raises(ValueError, match="0/1"):
            LabeledSampleSet(X, e=[0, 2, 1])
        with pytest.raises(ValueError, match="finite"):
            LabeledSampleSet(np.array([[np.nan, 0.0]]))
        with pytest.raises(ValueError, match="declared dim"):
            LabeledSampleSet(X, dim=3)

    def test_immutable(self):
        d = LabeledSampleSet(np.zeros((2, 2)), w=[0, 1], e=[1, 1])
        with pytest.raises(ValueError):
            d.features[0, 0] = 1.0
        with pytest.raises(ValueError):
            d.w[0] = 1

    def test_require_names_role(self):
        d = LabeledSampleSet(np.zeros((2, 2)), e=[0, 1])
        with pytest.raises(ColumnMissingError, match="D\\^PU.*'w'"):
            d.require("w", role="D^PU")

    def test_take_keep_concat(self):
        X = np.arange(8.0).reshape(4, 2)
        d = LabeledSampleSet(X, w=[1, 0, 0, 0], e=[1, 1, 0, 0], y_oracle=[1, 0, 1, 0])
        sub = d.take(d.e == 1)
        assert sub.n == 2 and sub.w.tolist() == [1, 0]
        only_e = d.keep("e")
        assert not only_e.has("w") and not only_e.has("y_oracle")
        both = LabeledSampleSet.concat([d, only_e])
        assert both.n == 8 and both.has("e") and not both.has("w")

    def test_empty_set_keeps_dimension(self):
        d = LabeledSampleSet(np.zeros((0, 3)), w=[])
        assert d.n == 0 and d.dim == 3


class TestLinearScorer:
    def test_params_round_trip(self):
        f = LinearScorer([1.0, -2.0], 0.5)
        g = LinearScorer.from_params(f.params)
        assert np.array_equal(g.weights, f.weights) and g.intercept == 0.5

    def test_zero_scorer_predicts_half(self):
        f = LinearScorer.zeros(3)
        np.testing.assert_array_equal(f.predict_proba(np.ones((4, 3))), 0.5)
        np.testing.assert_array_equal(f.predict(np.ones((4, 3))), 1)

    @given(st.lists(st.floats(-50, 50), min_size=2, max_size=2), st.floats(-50, 50))
    def test_scores_strictly_inside_unit_interval(self, w, b):
        p = LinearScorer(w, b).predict_proba(np.array([[1.0, -1.0], [0.0, 0.0]]))
        assert np.all((p > 0) & (p < 1))
