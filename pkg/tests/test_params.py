import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fedthreat.params import (
    LabeledBatch,
    LrSchedule,
    as_params,
    global_loss,
    local_gradient,
    local_loss,
    lr_at,
    sgd_step,
)


def fd_gradient(f, theta, h=1e-5):
    """Central finite differences, coordinate by coordinate."""
    g = np.zeros_like(theta)
    for j in range(theta.size):
        e = np.zeros_like(theta)
        e[j] = h
        g[j] = (f(theta + e) - f(theta - e)) / (2 * h)
    return g


def random_instance(rng, n_max=40, d_max=8):
    n = int(rng.integers(1, n_max))
    d = int(rng.integers(1, d_max))
    X = rng.normal(size=(n, d))
    y = rng.integers(0, 2, size=n)
    theta = rng.normal(scale=1.5, size=d + 1)
    return theta, LabeledBatch(X, y)


class TestLocalLoss:
    def test_zero_model_gives_ln2(self):
        batch = LabeledBatch(np.random.default_rng(0).normal(size=(13, 3)), np.arange(13) % 2)
        assert local_loss(np.zeros(4), batch) == pytest.approx(math.log(2), abs=1e-15)

    def test_confident_correct(self):
        # log(1 + e^-10) evaluated by hand
        batch = LabeledBatch([[1.0]], [1])
        assert local_loss([10.0, 0.0], batch) == pytest.approx(4.5398899216870535e-05, rel=1e-12)

    def test_confident_wrong(self):
        batch = LabeledBatch([[1.0]], [0])
        assert local_loss([10.0, 0.0], batch) == pytest.approx(10.000045398899218, rel=1e-12)

    def test_large_margins_stay_finite(self):
        batch = LabeledBatch([[1.0], [-1.0]], [0, 1])
        assert math.isfinite(local_loss([1e4, 0.0], batch))

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            local_loss(np.zeros(3), LabeledBatch([[1.0]], [1]))

    def test_empty_batch(self):
        with pytest.raises(ValueError):
            LabeledBatch(np.zeros((0, 2)), [])

    def test_bad_labels(self):
        with pytest.raises(ValueError):
            LabeledBatch([[1.0]], [2])

    @settings(max_examples=50, deadline=None)
    @given(st.integers(0, 2**32 - 1))
    def test_non_negative(self, seed):
        theta, batch = random_instance(np.random.default_rng(seed))
        assert local_loss(theta, batch) >= 0


class TestGradient:
    def test_at_zero_by_hand(self):
        # d/dw log(1+e^{-(w x + b)}) at 0 with x=1, y=1 is -sigmoid(0) = -0.5
        g = local_gradient(np.zeros(2), LabeledBatch([[1.0]], [1]))
        np.testing.assert_allclose(g, [-0.5, -0.5], atol=1e-15)

    def test_duplicated_batch_same_gradient(self):
        rng = np.random.default_rng(3)
        theta, batch = random_instance(rng)
        doubled = LabeledBatch(np.vstack([batch.features] * 2), np.concatenate([batch.labels] * 2))
        np.testing.assert_allclose(local_gradient(theta, doubled), local_gradient(theta, batch), rtol=1e-12, atol=1e-15)

    def test_matches_finite_differences(self):
        rng = np.random.default_rng(11)
        worst = 0.0
        for _ in range(100):
            theta, batch = random_instance(rng)
            g = local_gradient(theta, batch)
            fd = fd_gradient(lambda t: local_loss(t, batch), theta)
            worst = max(worst, np.max(np.abs(g - fd)) / max(np.max(np.abs(fd)), 1e-8))
        assert worst < 1e-5


class TestSgdStep:
    def test_scalar(self):
        np.testing.assert_allclose(sgd_step([1.0], [2.0], 0.1), [0.8], rtol=1e-15)

    def test_zero_gradient_fixed_point(self):
        theta = np.array([0.3, -2.0, 5.0])
        np.testing.assert_array_equal(sgd_step(theta, np.zeros(3), 0.7), theta)

    def test_vector(self):
        np.testing.assert_array_equal(sgd_step([0.0, 0.0], [1.0, -1.0], 1.0), [-1.0, 1.0])

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            sgd_step([0.0], [1.0, 2.0], 0.1)

    def test_negative_rate(self):
        with pytest.raises(ValueError):
            sgd_step([0.0], [1.0], -0.1)

    def test_rate_then_zero_rate_composes(self):
        rng = np.random.default_rng(5)
        theta, grad = rng.normal(size=6), rng.normal(size=6)
        once = sgd_step(theta, grad, 0.37)
        np.testing.assert_array_equal(sgd_step(once, grad, 0.0), once)

    def test_does_not_mutate(self):
        theta = np.ones(3)
        sgd_step(theta, np.ones(3), 0.5)
        np.testing.assert_array_equal(theta, np.ones(3))


class TestLrSchedule:
    def test_starts_at_alpha0(self):
        assert lr_at(LrSchedule(0.1, 3.0), 0) == 0.1

    def test_inverse_decay(self):
        assert lr_at(LrSchedule(0.1, 0.1), 10) == pytest.approx(0.05, rel=1e-15)

    def test_zero_decay_constant(self):
        s = LrSchedule(0.1, 0.0)
        assert all(lr_at(s, t) == 0.1 for t in range(0, 1000, 37))

    @given(st.floats(1e-6, 10), st.floats(0, 10), st.integers(0, 10_000))
    def test_monotone_and_positive(self, alpha0, decay, t):
        s = LrSchedule(alpha0, decay)
        assert 0 < lr_at(s, t + 1) <= lr_at(s, t)

    def test_invalid(self):
        with pytest.raises(ValueError):
            LrSchedule(0.0)
        with pytest.raises(ValueError):
            LrSchedule(0.1, -1.0)
        with pytest.raises(ValueError):
            lr_at(LrSchedule(0.1), -1)


class TestGlobalLoss:
    def test_zeros(self):
        assert global_loss([0, 0, 0]) == 0

    def test_mean(self):
        assert global_loss([1, 3]) == 2

    def test_singleton(self):
        assert global_loss([0.123]) == 0.123

    @given(st.floats(-1e6, 1e6), st.integers(1, 50))
    def test_constant(self, c, n):
        assert global_loss([c] * n) == pytest.approx(c, rel=1e-15, abs=1e-300)

    def test_empty(self):
        with pytest.raises(ValueError):
            global_loss([])


def test_as_params_rejects_non_finite():
    with pytest.raises(ValueError):
        as_params([1.0, np.nan])
    with pytest.raises(ValueError):
        as_params([1.0, 2.0], dim=3)
    np.testing.assert_array_equal(as_params([1, 2]), [1.0, 2.0])
