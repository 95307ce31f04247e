import math

import numpy as np
import pytest

from moodbot.errors import ConfigurationError
from moodbot.nn import AdamState, adam_step


def test_zero_gradient_leaves_params_unchanged():
    params = {"w": np.array([1.0, -2.0, 3.0])}
    state = AdamState.init(params)
    adam_step(params, {"w": np.zeros(3)}, state, lr=0.1)
    assert params["w"] == pytest.approx([1.0, -2.0, 3.0])
    assert state.t == 1


def test_first_step_magnitude():
    params = {"w": np.array([0.0])}
    state = AdamState.init(params)
    adam_step(params, {"w": np.array([1.0])}, state, lr=0.001)
    # bias correction makes the first step ~ -lr * sign(g)
    assert params["w"][0] == pytest.approx(-0.001, rel=1e-4)


def test_three_steps_match_reference_trace():
    # loss = 0.5 * w^2, gradient w; independent scalar reference below
    lr, b1, b2, eps = 0.01, 0.9, 0.999, 1e-7
    w_ref, m, v = 2.0, 0.0, 0.0
    trace = []
    for t in range(1, 4):
        g = w_ref
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        m_hat = m / (1 - b1**t)
        v_hat = v / (1 - b2**t)
        w_ref -= lr * m_hat / (math.sqrt(v_hat) + eps)
        trace.append(w_ref)

    params = {"w": np.array([2.0])}
    state = AdamState.init(params)
    for t in range(3):
        adam_step(params, {"w": params["w"].copy()}, state, lr=lr)
        assert params["w"][0] == pytest.approx(trace[t], abs=1e-12)
    assert state.t == 3


def test_second_moment_nonnegative():
    rng = np.random.default_rng(0)
    params = {"w": rng.normal(size=8)}
    state = AdamState.init(params)
    for _ in range(5):
        adam_step(params, {"w": rng.normal(size=8)}, state, lr=0.01)
        assert np.all(state.v["w"] >= 0.0)


def test_shape_mismatch():
    params = {"w": np.zeros(3)}
    state = AdamState.init(params)
    with pytest.raises(ConfigurationError):
        adam_step(params, {"w": np.zeros(4)}, state, lr=0.01)
