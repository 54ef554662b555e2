import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from rquad import nn
from rquad.nn import AdamState, MlpParams


def tiny():
    w1 = np.array([[1.0, -1.0], [0.5, 2.0]])
    b1 = np.array([0.0, 0.1])
    w2 = np.array([[1.0], [-2.0]])
    b2 = np.array([0.5])
    return MlpParams((2, 2, 1), [w1, w2], [b1, b2])


def test_forward_matches_hand_evaluation():
    x = np.array([0.3, -0.4])
    h1 = math.tanh(0.3 * 1.0 - 0.4 * 0.5 + 0.0)
    h2 = math.tanh(0.3 * -1.0 - 0.4 * 2.0 + 0.1)
    expected = h1 - 2.0 * h2 + 0.5
    out = nn.predict(tiny(), x)
    assert out.shape == (1,)
    assert out[0] == pytest.approx(expected, abs=1e-15)


def test_forward_batch_equals_rows():
    rng = np.random.default_rng(0)
    net = nn.init_mlp((5, 7, 3), rng, output_activation="tanh")
    xs = rng.normal(size=(6, 5))
    batch = nn.predict(net, xs)
    for i in range(6):
        np.testing.assert_allclose(batch[i], nn.predict(net, xs[i]), atol=1e-15)


def test_tanh_output_is_bounded():
    rng = np.random.default_rng(1)
    net = nn.init_mlp((3, 8, 2), rng, output_activation="tanh")
    out = nn.predict(net, rng.normal(size=(100, 3)) * 100)
    assert np.all(np.abs(out) <= 1.0)


def test_init_bounds_and_final_scale():
    rng = np.random.default_rng(2)
    net = nn.init_mlp((16, 32, 4), rng, final_scale=1e-3)
    assert np.abs(net.weights[0]).max() <= 1 / 4
    assert np.abs(net.weights[1]).max() <= 1e-3 / math.sqrt(32)
    assert net.size == 16 * 32 + 32 + 32 * 4 + 4


def test_wrong_input_width_is_rejected():
    with pytest.raises(nn.ConfigurationError):
        nn.predict(tiny(), np.zeros(3))


def test_unknown_activation_is_rejected():
    with pytest.raises(nn.ConfigurationError):
        MlpParams((2, 1), [np.zeros((2, 1))], [np.zeros(1)], hidden_activation="relu")


def loss(net, x, w):
    return float(np.sum(nn.predict(net, x) * w))


@pytest.mark.parametrize("instance", range(20))
def test_backward_matches_finite_differences(instance):
    rng = np.random.default_rng(100 + instance)
    dims = (int(rng.integers(2, 6)), int(rng.integers(3, 8)), int(rng.integers(3, 8)), int(rng.integers(1, 4)))
    out_act = "tanh" if instance % 2 else "linear"
    net = nn.init_mlp(dims, rng, output_activation=out_act)
    x = rng.normal(size=(4, dims[0]))
    w = rng.normal(size=(4, dims[-1]))
    out, cache = nn.mlp_forward(net, x)
    grads = nn.mlp_backward(net, cache, w)

    h = 1e-6
    numeric = np.empty(net.size)
    for k in range(net.size):
        up, down = net.flat.copy(), net.flat.copy()
        up[k] += h
        down[k] -= h
        numeric[k] = (loss(net.like(up), x, w) - loss(net.like(down), x, w)) / (2 * h)
    err = np.linalg.norm(grads.flat - numeric) / max(np.linalg.norm(numeric), 1e-12)
    assert err < 1e-4

    numeric_x = np.empty_like(x)
    for idx in np.ndindex(*x.shape):
        up, down = x.copy(), x.copy()
        up[idx] += h
        down[idx] -= h
        numeric_x[idx] = (loss(net, up, w) - loss(net, down, w)) / (2 * h)
    err_x = np.linalg.norm(grads.inputs - numeric_x) / max(np.linalg.norm(numeric_x), 1e-12)
    assert err_x < 1e-4


def test_backward_inputs_only_skips_parameters():
    rng = np.random.default_rng(4)
    net = nn.init_mlp((3, 5, 2), rng)
    x = rng.normal(size=(2, 3))
    _, cache = nn.mlp_forward(net, x)
    full = nn.mlp_backward(net, cache, np.ones((2, 2)))
    partial = nn.mlp_backward(net, cache, np.ones((2, 2)), inputs_only=True)
    np.testing.assert_array_equal(partial.flat, 0.0)
    np.testing.assert_allclose(partial.inputs, full.inputs)


def test_adam_first_step_is_signed_learning_rate():
    net = tiny()
    g = np.linspace(-1.0, 1.0, net.size) + 0.05
    grads = nn.MlpGrads(g, None, None, None)
    new, state = nn.adam_step(net, grads, AdamState.zeros_like(net), lr=0.01)
    # bias correction makes the first moment ratio g / (|g| + eps)
    expected = net.flat - 0.01 * g / (np.abs(g) + 1e-8)
    np.testing.assert_allclose(new.flat, expected, rtol=1e-12, atol=1e-15)
    assert state.t == 1
    np.testing.assert_allclose(state.first_moments, 0.1 * g)
    np.testing.assert_allclose(state.second_moments, 0.001 * g * g)


def test_adam_second_step_by_hand():
    net = MlpParams((1, 1), [np.array([[1.0]])], [np.array([0.0])])
    state = AdamState.zeros_like(net)
    net, state = nn.adam_step(net, nn.MlpGrads(np.array([1.0, 2.0]), None, None, None), state, lr=0.1)
    net, state = nn.adam_step(net, nn.MlpGrads(np.array([3.0, -2.0]), None, None, None), state, lr=0.1)
    m = 0.9 * 0.1 * np.array([1.0, 2.0]) + 0.1 * np.array([3.0, -2.0])
    v = 0.999 * 0.001 * np.array([1.0, 4.0]) + 0.001 * np.array([9.0, 4.0])
    m_hat, v_hat = m / (1 - 0.81), v / (1 - 0.999**2)
    g1 = np.array([1.0, 2.0])
    start = np.array([1.0, 0.0]) - 0.1 * g1 / (np.abs(g1) + 1e-8)
    expected = start - 0.1 * m_hat / (np.sqrt(v_hat) + 1e-8)
    np.testing.assert_allclose(net.flat, expected, rtol=1e-12)


def test_adam_rejects_non_finite_gradient():
    net = tiny()
    g = np.zeros(net.size)
    g[3] = np.nan
    with pytest.raises(nn.DivergenceError):
        nn.adam_step(net, nn.MlpGrads(g, None, None, None), AdamState.zeros_like(net), lr=0.01)


def test_adam_minimises_a_quadratic():
    net = MlpParams((2, 1), [np.array([[3.0], [-2.0]])], [np.array([1.0])])
    state = AdamState.zeros_like(net)
    for _ in range(3000):
        net, state = nn.adam_step(net, nn.MlpGrads(2 * net.flat, None, None, None), state, lr=0.01)
    assert np.abs(net.flat).max() < 1e-2


def test_soft_update_examples():
    a = MlpParams.from_flat((1, 1), np.array([0.0, 0.0]))
    b = MlpParams.from_flat((1, 1), np.array([1.0, -2.0]))
    np.testing.assert_allclose(nn.soft_update(a, b, 0.1).flat, [0.1, -0.2])
    np.testing.assert_array_equal(nn.soft_update(a, b, 1.0).flat, b.flat)
    np.testing.assert_array_equal(nn.soft_update(a, b, 0.0).flat, a.flat)


@given(st.floats(0.001, 0.5), st.integers(1, 200))
def test_soft_update_converges_geometrically(tau, n):
    target = MlpParams.from_flat((1, 1), np.array([0.0, 0.0]))
    source = MlpParams.from_flat((1, 1), np.array([1.0, 1.0]))
    for _ in range(n):
        target = nn.soft_update(target, source, tau)
    np.testing.assert_allclose(1.0 - target.flat, (1.0 - tau) ** n, rtol=1e-9, atol=1e-13)


def test_soft_update_shape_mismatch():
    with pytest.raises(nn.ConfigurationError):
        nn.soft_update(tiny(), MlpParams.from_flat((1, 1), np.zeros(2)), 0.5)


def test_params_copy_and_equality():
    net = tiny()
    other = net.copy()
    assert other == net
    other.flat[0] += 1.0
    assert other != net
    assert net.weights[0][0, 0] == 1.0
    # views share the flat buffer
    other.weights[0][0, 0] = 7.0
    assert other.flat[0] == 7.0
