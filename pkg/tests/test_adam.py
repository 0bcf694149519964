"""Adam update rule against the scalar recursion run independently."""

import numpy as np
import pytest

from comprsma.adam import AdamState, adam_step
from comprsma.autodiff import NumericFault


def test_first_step_is_bias_corrected_unit_step():
    state = AdamState.zeros(1)
    new = adam_step(state, np.array([0.5]), np.array([1.0]), lr=1e-3)
    # m_hat = 1, v_hat = 1 after bias correction, so the step is lr/(1+eps)
    assert new[0] == pytest.approx(0.5 - 1e-3, abs=1e-9)
    assert state.t == 1


def test_zero_gradient_leaves_params_unchanged():
    state = AdamState.zeros(3)
    p = np.array([1.0, -2.0, 3.0])
    new = adam_step(state, p, np.zeros(3), lr=0.1)
    assert np.array_equal(new, p)


def test_quadratic_descent_matches_independent_recursion():
    # optimize f(x) = x^2 from x=1 with lr=0.1 for 100 steps
    state = AdamState.zeros(1)
    x = np.array([1.0])
    for _ in range(100):
        x = adam_step(state, x, 2.0 * x, lr=0.1)
    assert abs(x[0]) < 0.1

    # independent scalar recursion of the same formulas
    m = v = 0.0
    xs = 1.0
    b1, b2, eps = 0.9, 0.999, 1e-8
    for t in range(1, 101):
        g = 2.0 * xs
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        mh = m / (1 - b1**t)
        vh = v / (1 - b2**t)
        xs = xs - 0.1 * mh / (np.sqrt(vh) + eps)
    assert x[0] == pytest.approx(xs, abs=1e-12)


def test_update_opposes_gradient_sign_from_zero_moments():
    for sign in (+1.0, -1.0):
        state = AdamState.zeros(1)
        new = adam_step(state, np.array([0.0]), np.array([sign]), lr=0.01)
        assert np.sign(new[0]) == -sign


def test_counter_strictly_increments():
    state = AdamState.zeros(2)
    p = np.zeros(2)
    for expected in (1, 2, 3):
        p = adam_step(state, p, np.ones(2), lr=1e-3)
        assert state.t == expected


def test_nan_gradient_rejected():
    state = AdamState.zeros(2)
    with pytest.raises(NumericFault):
        adam_step(state, np.zeros(2), np.array([1.0, np.nan]), lr=1e-3)


def test_shape_mismatch_rejected():
    state = AdamState.zeros(2)
    with pytest.raises(ValueError):
        adam_step(state, np.zeros(3), np.zeros(3), lr=1e-3)
    with pytest.raises(ValueError):
        adam_step(state, np.zeros(2), np.zeros(2), lr=0.0)
