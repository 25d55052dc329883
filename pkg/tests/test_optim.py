"""AdamW: checked step by step against an independently written reference."""
import numpy as np
import pytest

from tsdiff.errors import ConfigError
from tsdiff.nn import AdamState, ParameterSet, adam_step


def reference_adamw(p, grads, lr, b1, b2, eps, wd):
    """Textbook AdamW recursion, written without looking at the package code."""
    p = p.copy().astype(np.float64)
    m = np.zeros_like(p)
    v = np.zeros_like(p)
    for t, g in enumerate(grads, start=1):
        g = g.astype(np.float64)
        m = b1 * m + (1.0 - b1) * g
        v = b2 * v + (1.0 - b2) * g * g
        mhat = m / (1.0 - b1 ** t)
        vhat = v / (1.0 - b2 ** t)
        p = p * (1.0 - lr * wd)
        p = p - lr * mhat / (np.sqrt(vhat) + eps)
    return p


def _param_set(values):
    ps = ParameterSet()
    ps.add("w", values.copy())
    return ps


def _apply(ps, grads, state):
    for g in grads:
        ps["w"].value.grad = g.astype(ps["w"].value.dtype)
        adam_step(ps, state)


def test_matches_reference_over_ten_steps():
    rng = np.random.default_rng(0)
    init = rng.normal(size=(4, 3))
    grads = [rng.normal(size=(4, 3)) for _ in range(10)]

    ps = _param_set(init)
    state = AdamState(lr=1e-2, beta1=0.9, beta2=0.999, eps=1e-8,
                      weight_decay=0.01)
    _apply(ps, grads, state)
    expected = reference_adamw(init, grads, 1e-2, 0.9, 0.999, 1e-8, 0.01)
    assert np.allclose(ps["w"].value.data, expected, atol=1e-12)


def test_weight_decay_is_decoupled():
    """With zero gradient the only movement is the multiplicative shrink."""
    init = np.full((3,), 5.0)
    ps = _param_set(init)
    state = AdamState(lr=0.1, weight_decay=0.01)
    _apply(ps, [np.zeros(3)], state)
    assert np.allclose(ps["w"].value.data, 5.0 * (1.0 - 0.1 * 0.01), atol=1e-15)


def test_zero_decay_pure_adam():
    init = np.array([1.0])
    grads = [np.array([0.5])] * 3
    ps = _param_set(init)
    state = AdamState(lr=1e-3, weight_decay=0.0)
    _apply(ps, grads, state)
    expected = reference_adamw(init, grads, 1e-3, 0.9, 0.999, 1e-8, 0.0)
    assert np.allclose(ps["w"].value.data, expected, atol=1e-14)


def test_first_step_size_bounded_by_lr():
    # bias correction makes the first Adam step approximately lr * sign(g)
    ps = _param_set(np.zeros(5))
    state = AdamState(lr=1e-3, weight_decay=0.0)
    g = np.random.default_rng(1).normal(size=5)
    _apply(ps, [g], state)
    step = np.abs(ps["w"].value.data)
    assert np.all(step <= 1e-3 * 1.01)
    assert np.all(step >= 1e-3 * 0.9)


def test_step_counter_advances():
    ps = _param_set(np.ones(2))
    state = AdamState(lr=1e-3)
    assert state.t_opt == 0
    _apply(ps, [np.ones(2), np.ones(2)], state)
    assert state.t_opt == 2


def test_moments_tracked_per_parameter():
    ps = ParameterSet()
    ps.add("a", np.zeros(2))
    ps.add("b", np.zeros(3))
    state = AdamState(lr=1e-3)
    ps["a"].value.grad = np.ones(2)
    ps["b"].value.grad = np.ones(3)
    adam_step(ps, state)
    assert set(state.m) == {"a", "b"}
    assert state.m["a"].shape == (2,)
    assert state.v["b"].shape == (3,)


def test_invalid_hyperparameters_rejected():
    with pytest.raises(ConfigError):
        AdamState(lr=-1.0)
    with pytest.raises(ConfigError):
        AdamState(lr=1e-3, beta1=1.0)
    with pytest.raises(ConfigError):
        AdamState(lr=1e-3, weight_decay=-0.1)
