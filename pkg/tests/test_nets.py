import math

import numpy as np
import pytest

from mvlong.nets import (DenseSpec, DivergenceError, GruSpec, backward, forward, init_params, load_params,
                         save_params)


def sigmoid(x):
    return 1.0 / (1.0 + math.exp(-x))


def set_all(params, value):
    for arr in params.tensors.values():
        arr[...] = value


def test_zero_weights_give_zero_state():
    params = init_params(GruSpec(hidden_dim=3), 2, 0)
    set_all(params, 0.0)
    out = forward(params, np.random.default_rng(0).normal(size=(4, 2, 5)))
    np.testing.assert_array_equal(out.values, 0.0)


def test_closed_update_gate_freezes_state():
    params = init_params(GruSpec(hidden_dim=3), 2, 1)
    params.tensors["l0.b_u"][...] = -1e6
    out = forward(params, np.random.default_rng(0).normal(size=(4, 2, 5)))
    np.testing.assert_array_equal(out.values, 0.0)


def test_scalar_hand_value():
    params = init_params(GruSpec(hidden_dim=1), 1, 0)
    set_all(params, 1.0)
    for b in ("l0.b_u", "l0.b_r", "l0.b_h"):
        params.tensors[b][...] = 0.0
    out = forward(params, np.ones((1, 1, 1)))
    # u = sigmoid(1), candidate = tanh(1), h = u * candidate
    assert out.values[0, 0] == pytest.approx(sigmoid(1.0) * math.tanh(1.0), abs=1e-15)
    assert out.values[0, 0] == pytest.approx(0.5568, abs=5e-5)


def test_two_step_hand_value():
    params = init_params(GruSpec(hidden_dim=1), 1, 0)
    for k in params.tensors:
        params.tensors[k][...] = 0.5
    x = [1.0, -2.0]
    h = 0.0
    for xt in x:
        u = sigmoid(0.5 * xt + 0.5 * h + 0.5)
        r = sigmoid(0.5 * xt + 0.5 * h + 0.5)
        hh = math.tanh(0.5 * xt + 0.5 * r * h + 0.5)
        h = (1 - u) * h + u * hh
    out = forward(params, np.array(x).reshape(1, 1, 2))
    assert out.values[0, 0] == pytest.approx(h, abs=1e-14)


def test_dense_hand_value():
    params = init_params(DenseSpec((2, 1)), 2, 0)
    params.tensors["W0"][...] = [[1.0, -1.0], [2.0, 0.5]]
    params.tensors["b0"][...] = [0.0, -1.0]
    params.tensors["W1"][...] = [[1.0, 3.0]]
    params.tensors["b1"][...] = [0.25]
    x = np.array([[1.0, 3.0], [2.0, 0.0]])
    # hidden relu: col0 -> (max(-1,0), max(2+1-1,0)) = (0, 2); col1 -> (3, 5)
    out = forward(params, x).values
    np.testing.assert_allclose(out, [[0.25 + 6.0, 0.25 + 3.0 + 15.0]])


def finite_difference_check(params, inputs, rng, n_checks=25, eps=1e-5):
    out = forward(params, inputs)
    g = rng.normal(size=out.values.shape)
    grads, dinput = backward(params, out.cache, g)

    def value():
        return float(np.sum(forward(params, inputs).values * g))

    worst = 0.0
    names = list(params.tensors)
    for _ in range(n_checks):
        name = names[rng.integers(len(names))]
        arr = params.tensors[name]
        idx = tuple(rng.integers(s) for s in arr.shape)
        orig = arr[idx]
        arr[idx] = orig + eps
        up = value()
        arr[idx] = orig - eps
        down = value()
        arr[idx] = orig
        num = (up - down) / (2 * eps)
        ana = grads.tensors[name][idx]
        worst = max(worst, abs(num - ana) / max(abs(num), abs(ana), 1e-6))
    # input gradients
    x = np.array(inputs, dtype=float)
    for _ in range(5):
        idx = tuple(rng.integers(s) for s in x.shape)
        orig = x[idx]
        x[idx] = orig + eps
        up = float(np.sum(forward(params, x).values * g))
        x[idx] = orig - eps
        down = float(np.sum(forward(params, x).values * g))
        x[idx] = orig
        num = (up - down) / (2 * eps)
        worst = max(worst, abs(num - dinput[idx]) / max(abs(num), abs(dinput[idx]), 1e-6))
    return worst


def gru_instance(seed, layers=1):
    rng = np.random.default_rng(seed)
    params = init_params(GruSpec(hidden_dim=5, n_layers=layers), 3, rng)
    for arr in params.tensors.values():
        arr[...] = rng.normal(scale=0.5, size=arr.shape)
    return params, rng.normal(size=(4, 3, 4)), rng


def dense_instance(seed, activation="tanh"):
    rng = np.random.default_rng(seed)
    params = init_params(DenseSpec((6, 4, 3), activation), 5, rng)
    for arr in params.tensors.values():
        arr[...] = rng.normal(scale=0.5, size=arr.shape)
    return params, rng.normal(size=(5, 7)), rng


@pytest.mark.parametrize("seed", range(4))
def test_gru_gradients(seed):
    params, x, rng = gru_instance(seed)
    assert finite_difference_check(params, x, rng) < 1e-4


def test_stacked_gru_gradients():
    params, x, rng = gru_instance(11, layers=2)
    assert finite_difference_check(params, x, rng) < 1e-4


@pytest.mark.parametrize("activation", ["tanh", "relu"])
def test_dense_gradients(activation):
    params, x, rng = dense_instance(3, activation)
    assert finite_difference_check(params, x, rng) < 1e-4


def test_stale_cache_rejected():
    params, x, rng = dense_instance(0)
    out = forward(params, x)
    grads, _ = backward(params, out.cache, np.ones_like(out.values))
    params.step(grads, 1e-3)
    with pytest.raises(ValueError, match="stale"):
        backward(params, out.cache, np.ones_like(out.values))


def test_step_is_ascent():
    params, x, rng = dense_instance(1)
    g = rng.normal(size=(3, 7))
    out = forward(params, x)
    before = float(np.sum(out.values * g))
    grads, _ = backward(params, out.cache, g)
    params.step(grads, 1e-4)
    assert float(np.sum(forward(params, x).values * g)) > before


def test_init_range_and_determinism():
    a = init_params(DenseSpec((50,)), 100, 5)
    b = init_params(DenseSpec((50,)), 100, 5)
    w = a.tensors["W0"]
    np.testing.assert_array_equal(w, b.tensors["W0"])
    assert np.abs(w).max() <= 0.1
    # uniform(-s, s) has variance s^2 / 3
    se = math.sqrt(0.01 / 3 / w.size)
    assert abs(w.mean()) < 3 * se
    np.testing.assert_array_equal(a.tensors["b0"], 0.0)
    c = init_params(DenseSpec((50,)), 100, 6)
    assert not np.array_equal(w, c.tensors["W0"])


def test_gru_batch_permutation_equivariant():
    params, x, rng = gru_instance(2)
    perm = rng.permutation(x.shape[0])
    np.testing.assert_allclose(forward(params, x[perm]).values, forward(params, x).values[:, perm],
                               rtol=0, atol=1e-15)


def test_dense_batch_permutation_equivariant():
    params, x, rng = dense_instance(2)
    perm = rng.permutation(x.shape[1])
    np.testing.assert_allclose(forward(params, x[:, perm]).values, forward(params, x).values[:, perm],
                               rtol=0, atol=1e-15)


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_divergence_detected():
    params, x, _ = dense_instance(4)
    params.tensors["W2"][0, 0] = np.inf
    with pytest.raises(DivergenceError):
        forward(params, x)


def test_shape_errors():
    params, x, _ = gru_instance(0)
    with pytest.raises(ValueError):
        forward(params, np.zeros((2, 4, 3)))
    with pytest.raises(ValueError):
        forward(params, np.zeros((2, 3, 0)))
    dense, _, _ = dense_instance(0)
    with pytest.raises(ValueError):
        forward(dense, np.zeros((4, 2)))


@pytest.mark.parametrize("kind", ["gru", "dense"])
def test_checkpoint_round_trip(tmp_path, kind):
    params, x, _ = gru_instance(5, layers=2) if kind == "gru" else dense_instance(5)
    save_params(params, tmp_path / "ckpt")
    back = load_params(tmp_path / "ckpt")
    assert type(back) is type(params)
    for k in params.tensors:
        np.testing.assert_array_equal(back.tensors[k], params.tensors[k])
    np.testing.assert_array_equal(forward(back, x).values, forward(params, x).values)


def test_dense_identity_and_linear_gradient():
    rng = np.random.default_rng(8)
    params = init_params(DenseSpec((3,)), 3, rng)
    params.tensors["W0"][...] = np.eye(3)
    x = rng.normal(size=(3, 4))
    out = forward(params, x)
    np.testing.assert_array_equal(out.values, x)
    g = rng.normal(size=(3, 4))
    grads, dx = backward(params, out.cache, g)
    np.testing.assert_allclose(grads.tensors["W0"], g @ x.T, rtol=0, atol=1e-15)
    np.testing.assert_allclose(dx, g, atol=1e-15)


def test_zero_output_gradient_gives_zero():
    params, x, _ = gru_instance(6)
    out = forward(params, x)
    grads, dx = backward(params, out.cache, np.zeros_like(out.values))
    assert all(not v.any() for v in grads.tensors.values())
    assert not dx.any()


def test_three_layer_dense_matches_matrix_products():
    params, _, rng = dense_instance(7, "relu")
    x = rng.normal(size=(5, 2))
    w, b = params.tensors, params.tensors
    h1 = np.maximum(w["W0"] @ x + b["b0"][:, None], 0)
    h2 = np.maximum(w["W1"] @ h1 + b["b1"][:, None], 0)
    expected = w["W2"] @ h2 + b["b2"][:, None]
    np.testing.assert_allclose(forward(params, x).values, expected, atol=1e-14)
