import numpy as np
import pytest

from metricdae import nn
from metricdae.nn import Dense, MlpParams

from conftest import central_differences, rel_err


def single(w, b, act="identity"):
    return MlpParams([Dense(np.array(w, float), np.array(b, float), act)])


def test_forward_identity_layer():
    out, _ = nn.forward(single(np.eye(2), [0, 0]), [[1, 2]])
    np.testing.assert_array_equal(out, [[1, 2]])


def test_forward_relu_clamps_negative():
    out, _ = nn.forward(single([[-1]], [0], "relu"), [[3]])
    np.testing.assert_array_equal(out, [[0]])


def test_forward_affine():
    out, _ = nn.forward(single([[2, 0], [0, 2]], [1, 1]), [[1, 1]])
    np.testing.assert_array_equal(out, [[3, 3]])


def test_forward_rejects_wrong_width():
    with pytest.raises(ValueError, match="columns"):
        nn.forward(single(np.eye(2), [0, 0]), [[1, 2, 3]])


def test_layers_must_chain():
    with pytest.raises(ValueError, match="expects"):
        MlpParams([Dense(np.ones((3, 2)), np.zeros(3)), Dense(np.ones((1, 4)), np.zeros(1))])


def test_forward_is_deterministic(rng):
    p = nn.init_mlp([5, 4, 3], rng)
    x = rng.normal(size=(7, 5))
    a, _ = nn.forward(p, x)
    b, _ = nn.forward(p, x)
    assert a.tobytes() == b.tobytes()


def test_backward_scalar_product_rule():
    p = single([[0.5]], [0.0])
    _, tape = nn.forward(p, [[3.0]])
    grads, gx = nn.backward(p, tape, [[1.0]])
    assert grads.weights[0][0, 0] == 3.0
    assert grads.biases[0][0] == 1.0
    assert gx[0, 0] == 0.5


def test_backward_dead_relu_unit():
    p = MlpParams([Dense([[1.0], [-1.0]], [0.0, 0.0], "relu"), Dense([[1.0, 1.0]], [0.0])])
    _, tape = nn.forward(p, [[2.0]])
    grads, _ = nn.backward(p, tape, [[1.0]])
    # unit 1 has pre-activation -2
    assert grads.weights[0][1, 0] == 0.0
    assert grads.biases[0][1] == 0.0
    assert grads.weights[1][0, 1] == 0.0


def test_backward_matches_finite_differences(rng):
    p = nn.init_mlp([4, 6, 3], rng)
    for layer in p.layers:
        layer.bias += rng.normal(scale=0.3, size=layer.bias.shape)
    x = rng.normal(size=(5, 4))
    target = rng.normal(size=(5, 3))

    def loss_with(k, arr):
        q = p.copy()
        q.arrays()[k][...] = arr
        y, _ = nn.forward(q, x)
        return 0.5 * np.sum((y - target) ** 2)

    y, tape = nn.forward(p, x)
    grads, _ = nn.backward(p, tape, y - target)
    for k, (a, g) in enumerate(zip(p.arrays(), grads.arrays())):
        num = central_differences(lambda v: loss_with(k, v), a)
        assert rel_err(g, num) < 1e-6


def test_backward_rejects_stale_tape(rng):
    p = nn.init_mlp([3, 2], rng)
    _, tape = nn.forward(p, rng.normal(size=(2, 3)))
    nn.adam_step(p, nn.GradientBundle.zeros_like(p), nn.AdamState.for_params(p))
    with pytest.raises(ValueError, match="tape"):
        nn.backward(p, tape, np.ones((2, 2)))
    other = nn.init_mlp([3, 2], rng)
    _, tape2 = nn.forward(other, rng.normal(size=(2, 3)))
    with pytest.raises(ValueError, match="tape"):
        nn.backward(p, tape2, np.ones((2, 2)))


def test_adam_zero_gradient_is_fixed_point(rng):
    p = nn.init_mlp([3, 2], rng)
    before = [a.copy() for a in p.arrays()]
    state = nn.AdamState.for_params(p)
    nn.adam_step(p, nn.GradientBundle.zeros_like(p), state)
    assert state.t == 1
    for a, b in zip(p.arrays(), before):
        np.testing.assert_array_equal(a, b)


def test_adam_first_step_closed_form():
    p = single([[0.0]], [0.0])
    state = nn.AdamState.for_params(p, lr=1e-3)
    g = nn.GradientBundle([np.array([[1.0]])], [np.array([0.0])])
    nn.adam_step(p, g, state)
    # bias-corrected m_hat = 1, v_hat = 1
    assert p.layers[0].weight[0, 0] == pytest.approx(-1e-3 / (1 + 1e-8), rel=1e-12)


def test_adam_constant_gradient_decreases_monotonically():
    p = single([[0.0]], [0.0])
    state = nn.AdamState.for_params(p)
    g = nn.GradientBundle([np.array([[1.0]])], [np.array([0.0])])
    values = [0.0]
    for _ in range(2):
        nn.adam_step(p, g, state)
        values.append(p.layers[0].weight[0, 0])
    assert values[0] > values[1] > values[2]
    assert state.t == 2


def test_adam_rejects_non_finite(rng):
    p = nn.init_mlp([2, 2], rng)
    before = [a.copy() for a in p.arrays()]
    g = nn.GradientBundle.zeros_like(p)
    g.weights[0][0, 0] = np.nan
    state = nn.AdamState.for_params(p)
    with pytest.raises(FloatingPointError):
        nn.adam_step(p, g, state)
    assert state.t == 0
    for a, b in zip(p.arrays(), before):
        np.testing.assert_array_equal(a, b)


def test_count_params(rng):
    enc = nn.init_mlp([88, 2], rng)
    dec = nn.init_mlp([2, 88], rng)
    assert nn.count_params(enc) == 178
    assert nn.count_params(enc) + nn.count_params(dec) == 442
    assert nn.count_params(MlpParams([])) == 0


def test_count_matches_adam_updated_scalars(rng):
    p = nn.init_mlp([6, 4, 2], rng)
    state = nn.AdamState.for_params(p)
    assert sum(m.size for m in state.m) == nn.count_params(p)


def test_glorot_init_bounds(rng):
    p = nn.init_mlp([88, 2], rng)
    s = np.sqrt(6 / 90)
    assert np.all(np.abs(p.layers[0].weight) <= s)
    assert np.all(p.layers[0].bias == 0)


def test_grad_check_reconstruction_small_batch(rng):
    p = nn.init_mlp([5, 3], rng)
    x = rng.normal(size=(3, 5))
    t = rng.normal(size=(3, 3))

    def loss_fn(params):
        y, tape = nn.forward(params, x)
        grads, _ = nn.backward(params, tape, 2 * (y - t) / y.size)
        return float(np.mean((y - t) ** 2)), grads

    assert nn.check_mlp_gradients(p, loss_fn) < 1e-6


def test_grad_check_empty_net():
    assert nn.check_mlp_gradients(MlpParams([]), lambda p: (0.0, None)) == 0.0
