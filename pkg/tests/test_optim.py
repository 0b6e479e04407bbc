import math

import numpy as np
import pytest
from conftest import adam_reference, central_diff, max_rel_err, naive_bce
from hypothesis import given, settings
from hypothesis import strategies as st

from scaffoldnet.optim import T_MAX, AdamState, adam_step, bce_grad, bce_loss


# -------------------------------------------------------------------- BCE


def test_confident_correct():
    assert bce_loss([[40.0]], [1]).mean < 1e-10


def test_half_probability_is_ln2():
    assert bce_loss([[0.0]], [1]).mean == pytest.approx(math.log(2), abs=1e-12)


def test_confident_mistake_does_not_overflow():
    with np.errstate(all="raise"):
        r = bce_loss([[40.0]], [0])
    assert r.mean == pytest.approx(40.0, abs=1e-12)
    assert np.isfinite(bce_loss([[1e4]], [0]).mean)


def test_mean_matches_per_sample():
    z = np.random.default_rng(0).standard_normal((9, 1))
    y = np.arange(9) % 2
    r = bce_loss(z, y)
    assert r.per_sample.shape == (9,)
    assert r.mean == pytest.approx(r.per_sample.mean(), abs=1e-15)
    assert np.all(r.per_sample >= 0)


def test_rejects_non_binary_labels():
    with pytest.raises(ValueError):
        bce_loss([[0.0]], [2])
    with pytest.raises(ValueError):
        bce_grad([[0.0], [1.0]], [1])


def test_grad_examples():
    assert bce_grad(np.array([[0.0]]), [1])[0, 0] == -0.5
    g = bce_grad(np.array([[60.0], [-60.0]]), [1, 0])
    assert np.all(np.abs(g) < 1e-20)


def test_grad_matches_finite_differences():
    rng = np.random.default_rng(5)
    z = rng.standard_normal((16, 1)) * 4
    y = rng.integers(0, 2, 16)
    num = central_diff(lambda: bce_loss(z, y).mean, z, rel_step=1e-5)
    assert max_rel_err(bce_grad(z, y), num) < 1e-6


def test_stable_equals_naive_form():
    rng = np.random.default_rng(6)
    bound = math.log((1 - 1e-6) / 1e-6)
    z = rng.uniform(-bound, bound, 10_000)
    y = rng.integers(0, 2, 10_000)
    assert np.max(np.abs(bce_loss(z, y).per_sample - naive_bce(z, y))) < 1e-6


@settings(max_examples=100, deadline=None)
@given(st.floats(-700, 700), st.integers(0, 1))
def test_loss_non_negative_and_finite(z, y):
    v = bce_loss([[z]], [y]).mean
    assert v >= 0 and math.isfinite(v)


# ------------------------------------------------------------------- Adam


def test_state_mirrors_params():
    params = [np.zeros((3, 2)), np.zeros(4)]
    s = AdamState.for_params(params)
    assert [m.shape for m in s.m] == [v.shape for v in s.v] == [(3, 2), (4,)]
    assert s.t == 0 and (s.alpha, s.beta1, s.beta2, s.epsilon) == (0.001, 0.9, 0.999, 1e-8)


def test_zero_gradient_keeps_params():
    p = [np.array([1.0, -2.0, 3.0])]
    s = AdamState.for_params(p)
    for _ in range(20):
        adam_step(s, p, [np.zeros(3)])
    np.testing.assert_array_equal(p[0], [1.0, -2.0, 3.0])
    assert s.t == 20


def test_first_step_is_alpha_sign():
    g = np.array([3.0, -0.2, 1e-3, -50.0])
    p = [np.zeros(4)]
    adam_step(AdamState.for_params(p), p, [g])
    assert np.all(np.abs(p[0]) <= 0.001)
    np.testing.assert_allclose(p[0], -0.001 * np.sign(g), rtol=1e-5)


def test_constant_gradient_direction_and_bound():
    g = np.array([2.0, -1.0, 0.5, -1e-2])
    p = [np.zeros(4)]
    s = AdamState.for_params(p)
    for _ in range(5):
        before = p[0].copy()
        adam_step(s, p, [g])
        delta = p[0] - before
        np.testing.assert_array_equal(np.sign(delta), -np.sign(g))
        assert np.all(np.abs(delta) <= 2 * s.alpha)


def test_step_bound_with_random_gradients():
    rng = np.random.default_rng(7)
    p = [np.zeros(50)]
    s = AdamState.for_params(p)
    for _ in range(100):
        before = p[0].copy()
        adam_step(s, p, [rng.standard_normal(50) * rng.uniform(1e-3, 1e3)])
        assert np.all(np.abs(p[0] - before) <= 2 * s.alpha)


def test_quadratic_trajectory_matches_transcription():
    ref = adam_reference(1.0, lambda th: 2 * th, 100)
    p = [np.array([1.0])]
    s = AdamState.for_params(p)
    for t in range(100):
        adam_step(s, p, [2 * p[0]])
        assert abs(p[0][0] - ref[t]) < 1e-10
    assert abs(ref[0] - 1.0) <= 0.001


def test_float32_params_stay_float32():
    p = [np.ones(3, np.float32)]
    adam_step(AdamState.for_params(p), p, [np.ones(3, np.float32)])
    assert p[0].dtype == np.float32


def test_shape_mismatch():
    p = [np.zeros(3)]
    s = AdamState.for_params(p)
    with pytest.raises(ValueError):
        adam_step(s, p, [np.zeros(4)])
    with pytest.raises(ValueError):
        adam_step(s, p, [])
    assert s.t == 0


def test_counter_overflow_detected():
    p = [np.zeros(1)]
    s = AdamState.for_params(p)
    s.t = T_MAX
    with pytest.raises(OverflowError):
        adam_step(s, p, [np.ones(1)])
