import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from robustlab.errors import ContractError, DivergenceError
from robustlab.neural import (
    AdamState,
    GradBundle,
    adam_step,
    backward,
    forward,
    grad_check,
    grad_check_input,
    init_mlp,
    load_net,
    save_net,
    soft_update,
    squared_loss,
)


def zero_net(sizes, output="linear", scale=1.0):
    net = init_mlp(sizes, np.random.default_rng(0), output=output, scale=scale)
    for p in net.params():
        p[...] = 0.0
    return net


def test_zero_network_outputs_zero():
    net = zero_net([3, 5, 2])
    assert np.array_equal(net(np.ones((4, 3))), np.zeros((4, 2)))
    assert net(np.ones(3)).shape == (2,)


def test_init_bounds_and_sizes():
    net = init_mlp([4, 16, 3], np.random.default_rng(1), final_limit=3e-3)
    assert net.layer_sizes == [4, 16, 3]
    assert net.n_params == 4 * 16 + 16 + 16 * 3 + 3
    assert np.abs(net.weights[0]).max() <= 0.5
    assert np.abs(net.weights[1]).max() <= 3e-3
    with pytest.raises(ContractError):
        init_mlp([4], np.random.default_rng(0))


def test_forward_rejects_wrong_width():
    with pytest.raises(ContractError):
        zero_net([3, 2])(np.ones(4))


def test_tanh_output_bounded():
    net = init_mlp([2, 8, 1], np.random.default_rng(2), output="tanh", scale=2.0)
    for p in net.params():
        p *= 100
    out = net(np.random.default_rng(3).normal(size=(50, 2)) * 10)
    assert np.all(np.abs(out) <= 2.0)


def test_single_linear_layer_gradient_by_hand():
    net = zero_net([2, 1])
    net.weights[0][:] = [[1.0], [2.0]]
    x = np.array([[1.0, -1.0], [0.5, 0.5]])
    out, cache = forward(net, x)
    grads, gx = backward(net, cache, np.ones_like(out))
    assert np.allclose(grads.weights[0], x.sum(axis=0)[:, None])
    assert np.allclose(grads.biases[0], [2.0])
    assert np.allclose(gx, [[1.0, 2.0], [1.0, 2.0]])
    with pytest.raises(ContractError):
        backward(net, cache, np.ones(3))


@settings(max_examples=40)
@given(st.integers(0, 2**32 - 1), st.sampled_from(["linear", "tanh"]))
def test_backward_matches_finite_differences(seed, output):
    rng = np.random.default_rng(seed)
    sizes = [int(rng.integers(1, 5))] + [int(rng.integers(1, 7)) for _ in range(rng.integers(0, 3))] + [int(rng.integers(1, 3))]
    net = init_mlp(sizes, rng, output=output, scale=float(rng.uniform(0.5, 2)))
    x = rng.normal(size=(int(rng.integers(1, 4)), sizes[0]))
    loss = squared_loss(rng.normal(size=(x.shape[0], sizes[-1])))
    rep = grad_check(net, loss, x)
    assert rep.passed, rep.summary()
    assert grad_check_input(net, loss, x) < 1e-4


def test_corrupted_backward_is_caught_and_located():
    net = init_mlp([3, 4, 2], np.random.default_rng(4))
    x = np.random.default_rng(5).normal(size=(3, 3))

    def broken(net, cache, g):
        grads, gx = backward(net, cache, g)
        grads.biases[1] = grads.biases[1] * 1.5 + 0.1
        return grads, gx

    rep = grad_check(net, squared_loss(np.zeros((3, 2))), x, backward_fn=broken)
    assert not rep.passed
    assert rep.worst_param == "layer 1 bias"
    assert "layer 1 bias" in rep.summary()


def test_adam_first_step_is_lr_times_sign():
    net = zero_net([2, 2])
    grads = GradBundle([np.array([[3.0, -0.5], [1e-3, -7.0]])], [np.array([0.2, -0.2])])
    state = AdamState.for_net(net)
    adam_step(net, grads, state, lr=0.01)
    assert np.allclose(net.weights[0], -0.01 * np.sign(grads.weights[0]), atol=1e-7)
    assert np.allclose(net.biases[0], -0.01 * np.sign(grads.biases[0]), atol=1e-7)


def test_adam_constant_gradient_steady_state():
    net = zero_net([1, 1])
    state = AdamState.for_net(net)
    g = GradBundle([np.array([[0.4]])], [np.array([-2.0])])
    before = [p.copy() for p in net.params()]
    for _ in range(200):
        before = [p.copy() for p in net.params()]
        adam_step(net, g, state, lr=1e-3)
    step = [p - b for p, b in zip(net.params(), before)]
    assert np.allclose(step[0], -1e-3, rtol=1e-6) and np.allclose(step[1], 1e-3, rtol=1e-6)


def test_adam_divergence_raises():
    net = zero_net([1, 1])
    net.weights[0][:] = np.inf
    with pytest.raises(DivergenceError):
        adam_step(net, GradBundle.zeros_like(net), AdamState.for_net(net))
    with pytest.raises(ContractError):
        adam_step(zero_net([1, 1]), GradBundle.zeros_like(net), AdamState.for_net(net), lr=0.0)


def test_soft_update_arithmetic_and_convergence():
    target, online = zero_net([2, 3]), zero_net([2, 3])
    for p in online.params():
        p[...] = 1.0
    soft_update(target, online, 0.1)
    assert np.allclose(target.weights[0], 0.1)
    for k in range(2, 51):
        soft_update(target, online, 0.1)
        assert np.allclose(target.weights[0], 1.0 - 0.9**k)
    soft_update(target, online, 1.0)
    assert all(np.array_equal(a, b) for a, b in zip(target.params(), online.params()))
    with pytest.raises(ContractError):
        soft_update(target, online, 0.0)
    with pytest.raises(ContractError):
        soft_update(zero_net([2, 4]), online, 0.5)


def test_checkpoint_roundtrip_bit_exact(tmp_path):
    net = init_mlp([3, 7, 2], np.random.default_rng(9), output="tanh", scale=2.0)
    save_net(tmp_path / "net.npz", net)
    back = load_net(tmp_path / "net.npz")
    assert back.output == "tanh" and back.scale == 2.0
    assert all(np.array_equal(a, b) for a, b in zip(back.params(), net.params()))
    x = np.random.default_rng(1).normal(size=(5, 3))
    assert np.array_equal(back(x), net(x))


def test_copy_is_independent():
    net = init_mlp([2, 2], np.random.default_rng(0))
    other = net.copy()
    other.weights[0] += 1
    assert not np.array_equal(other.weights[0], net.weights[0])
