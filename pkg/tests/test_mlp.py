import math

import numpy as np
import pytest

from bacnsim import errors
from bacnsim.learn.mlp import (
    Adam, Mlp, Sgd, clip_by_global_norm, finite_difference_gradients, make_optimizer,
    max_relative_error, mlp_backward, mlp_forward,
)


def test_zero_weights_zero_output():
    net = Mlp((3, 4, 2))
    net.set_flat(np.zeros(net.n_params))
    assert np.array_equal(mlp_forward(net, [1.0, -2.0, 3.0]), np.zeros(2))


def test_identity_layer_echoes():
    net = Mlp((3, 3))
    net.weights[0][...] = np.eye(3)
    x = np.array([0.5, -1.0, 2.0])
    assert np.array_equal(mlp_forward(net, x), x)


def test_golden_2_3_1():
    net = Mlp((2, 3, 1))
    net.weights[0][...] = [[0.1, 0.2, -0.3], [0.4, -0.5, 0.6]]
    net.biases[0][...] = [0.01, 0.02, 0.03]
    net.weights[1][...] = [[1.0], [-1.0], [0.5]]
    net.biases[1][...] = [0.1]
    # hidden pre-activations for x = (1, 2): 0.91, -0.78, 0.93
    want = math.tanh(0.91) - math.tanh(-0.78) + 0.5 * math.tanh(0.93) + 0.1
    assert mlp_forward(net, [1.0, 2.0])[0] == pytest.approx(want, abs=1e-12)
    assert want == pytest.approx(1.8391359, abs=1e-6)


def test_linear_chain_rule():
    net = Mlp((1, 1))
    net.weights[0][...] = 0.7
    gW, gb = mlp_backward(net, np.array([3.0]), np.array([2.0]))
    assert gW[0, 0] == 6.0 and gb[0] == 2.0


def test_zero_output_gradient():
    net = Mlp((4, 5, 3), np.random.default_rng(0))
    grads = mlp_backward(net, np.ones(4), np.zeros(3))
    assert all(np.all(g == 0) for g in grads)


@pytest.mark.parametrize("seed", range(5))
def test_gradients_match_finite_differences(seed):
    rng = np.random.default_rng(seed)
    net = Mlp((5, 7, 6, 3), rng)
    x = rng.normal(size=(4, 5))
    g = rng.normal(size=(4, 3))
    err = max_relative_error(mlp_backward(net, x, g), finite_difference_gradients(net, x, g))
    assert err <= 1e-4


def test_shape_errors():
    net = Mlp((3, 2))
    with pytest.raises(errors.ShapeMismatch):
        net.forward(np.ones(4))
    with pytest.raises(errors.ShapeMismatch):
        mlp_backward(net, np.ones(3), np.ones(3))
    with pytest.raises(errors.ShapeMismatch):
        net.set_flat(np.ones(3))
    with pytest.raises(errors.ShapeMismatch):
        Mlp((3,))


def test_flat_roundtrip_and_copy():
    net = Mlp((3, 4, 2), np.random.default_rng(1))
    twin = Mlp((3, 4, 2), np.random.default_rng(2))
    twin.set_flat(net.flat())
    assert np.array_equal(twin.forward(np.ones(3)), net.forward(np.ones(3)))
    c = net.copy()
    c.weights[0][0, 0] += 1
    assert c.weights[0][0, 0] != net.weights[0][0, 0]


def test_clip_by_global_norm():
    g = [np.array([3.0]), np.array([4.0])]
    out = clip_by_global_norm(g, 1.0)
    assert math.hypot(out[0][0], out[1][0]) == pytest.approx(1.0)
    assert clip_by_global_norm(g, 10.0) is g


@pytest.mark.parametrize("name", ["sgd", "adam"])
def test_optimizers_fit_linear_map(name):
    rng = np.random.default_rng(0)
    net = Mlp((2, 1), rng)
    opt = make_optimizer(name, net.params, lr=0.05)
    x = rng.normal(size=(64, 2))
    y = x @ np.array([[1.5], [-0.5]]) + 0.25
    for _ in range(500):
        out, acts = net.forward_cached(x)
        opt.step(net.params, net.backward(acts, (out - y) / len(x)))
    assert np.allclose(net.weights[0].ravel(), [1.5, -0.5], atol=1e-3)
    assert isinstance(opt, Sgd if name == "sgd" else Adam)
    with pytest.raises(ValueError):
        make_optimizer("rmsprop", net.params, 0.1)
