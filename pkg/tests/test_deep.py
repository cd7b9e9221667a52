import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from robustlab.deep import (
    DeepConfig,
    ValueBuffer,
    critic_value,
    ddpg_policy_grad,
    ddpg_target,
    dqn_target,
    make_agent,
    pr_ddpg_targets,
    pr_dqn_pessimistic_target,
    pr_dqn_robust_target,
    r_dqn_target,
    random_pessimistic_mode,
    read_log_csv,
    train_deep,
    update,
    write_log_csv,
)
from robustlab.envs import cartpole_env, pendulum_env
from robustlab.errors import CapabilityError, ConfigError
from robustlab.neural import forward, init_mlp, numeric_grads, rel_error


def linear_q(weights, bias):
    """Single-layer Q net: Q(x, .) = x W + b."""
    net = init_mlp([len(weights), len(bias)], np.random.default_rng(0))
    net.weights[0][:] = weights
    net.biases[0][:] = bias
    return net


def zero(sizes, output="linear", scale=1.0):
    net = init_mlp(sizes, np.random.default_rng(0), output=output, scale=scale)
    for p in net.params():
        p[...] = 0.0
    return net


def batch(**kw):
    base = {
        "s": np.array([[1.0, 0.0]]),
        "a": np.array([0]),
        "c": np.array([1.0]),
        "s_next": np.array([[1.0, 2.0]]),
        "done": np.array([False]),
        "u": np.array([1]),
        "c_p": np.array([-1.0]),
        "x_next": np.array([[0.0, 1.0]]),
        "done_x": np.array([False]),
    }
    base.update({k: np.asarray(v) for k, v in kw.items()})
    return base


# Q(s', .) = [1 + 4, 2 + 2] -> min 4; Q(x', .) = [2, 1] -> min 1
NET = linear_q([[1.0, 2.0], [2.0, 1.0]], [0.0, 0.0])


def test_pessimistic_target_examples():
    assert pr_dqn_pessimistic_target(batch(), zero([2, 2]), 0.9)[0] == -1.0
    assert pr_dqn_pessimistic_target(batch(done_x=[True]), NET, 0.9)[0] == -1.0
    assert pr_dqn_pessimistic_target(batch(), NET, 0.9)[0] == pytest.approx(-1.0 + 0.9 * 1.0)


def test_robust_target_examples():
    b = batch()
    assert pr_dqn_robust_target(b, NET, 0.9, 0.0)[0] == pytest.approx(1.0 + 0.9 * 4.0)
    assert pr_dqn_robust_target(b, NET, 0.9, 1.0)[0] == pytest.approx(1.0 + 0.9 * 1.0)
    assert pr_dqn_robust_target(b, NET, 0.9, 0.3)[0] == pytest.approx(1.0 + 0.9 * (0.7 * 4.0 + 0.3 * 1.0))
    assert pr_dqn_robust_target(b, NET, 0.9, 0.0)[0] == dqn_target(b, NET, 0.9)[0]


def test_r_dqn_target_examples():
    b = batch()
    buf = ValueBuffer(10)
    buf.extend([5.0])
    assert r_dqn_target(b, NET, 0.9, 0.0, buf)[0] == dqn_target(b, NET, 0.9)[0]
    buf = ValueBuffer(10)
    buf.extend([5.0])
    assert r_dqn_target(b, NET, 0.9, 1.0, buf)[0] == pytest.approx(1.0 + 0.9 * 5.0)


@settings(max_examples=30)
@given(st.integers(0, 2**32 - 1), st.floats(0.0, 1.0))
def test_r_dqn_dominates_pr_dqn_when_successors_recorded(seed, R):
    rng = np.random.default_rng(seed)
    net = init_mlp([2, 6, 3], rng)
    n = 16
    b = batch(
        s=rng.normal(size=(n, 2)),
        a=rng.integers(3, size=n),
        c=rng.normal(size=n),
        s_next=rng.normal(size=(n, 2)),
        done=np.zeros(n, bool),
        x_next=rng.normal(size=(n, 2)),
        done_x=np.zeros(n, bool),
        u=rng.integers(3, size=n),
        c_p=rng.normal(size=n),
    )
    buf = ValueBuffer(100)
    buf.extend(forward(net, b["x_next"])[0].min(axis=1))
    assert np.all(r_dqn_target(b, net, 0.9, R, buf) >= pr_dqn_robust_target(b, net, 0.9, R) - 1e-12)


def test_value_buffer_is_fifo():
    buf = ValueBuffer(3)
    buf.extend([9.0, 1.0, 2.0, 3.0])
    assert len(buf) == 3 and buf.max() == 3.0


def ddpg_nets():
    critic = zero([3, 1])
    critic.weights[0][:] = [[1.0], [2.0], [0.5]]  # Q = s0 + 2 s1 + 0.5 a
    actor = zero([2, 1])
    actor.weights[0][:] = [[1.0], [-1.0]]  # a = s0 - s1
    return critic, actor


def test_pr_ddpg_target_examples():
    critic, actor = ddpg_nets()
    b = batch(a=[[0.0]], u=[[0.0]])
    # Q(s') = 1 + 4 + 0.5 (1 - 2) = 4.5, Q(x') = 0 + 2 + 0.5 (0 - 1) = 1.5
    y_pi, y_phi = pr_ddpg_targets(b, critic, actor, critic, actor, 0.9, 0.3)
    assert y_pi[0] == pytest.approx(1.0 + 0.9 * (0.7 * 4.5 + 0.3 * 1.5))
    assert y_phi[0] == pytest.approx(-1.0 + 0.9 * 1.5)
    y0, _ = pr_ddpg_targets(b, critic, actor, critic, actor, 0.9, 0.0)
    assert y0[0] == ddpg_target(b, critic, actor, 0.9)[0]
    z_pi, z_phi = pr_ddpg_targets(b, zero([3, 1]), actor, zero([3, 1]), actor, 0.9, 0.5)
    assert z_pi[0] == 1.0 and z_phi[0] == -1.0


def test_policy_grad_examples():
    critic = zero([3, 1])
    critic.weights[0][:] = [[1.0], [1.0], [0.0]]  # ignores the action
    actor = init_mlp([2, 4, 1], np.random.default_rng(1), output="tanh", scale=2.0)
    g, _ = ddpg_policy_grad(actor, critic, np.ones((3, 2)))
    assert g.norm() == 0.0
    critic.weights[0][:] = [[0.0], [0.0], [1.0]]  # Q = a
    actor = zero([2, 1])
    states = np.array([[1.0, 2.0], [3.0, -1.0]])
    g, loss = ddpg_policy_grad(actor, critic, states)
    assert np.allclose(g.weights[0][:, 0], states.mean(axis=0)) and np.allclose(g.biases[0], [1.0])
    assert loss == 0.0


@settings(max_examples=30)
@given(st.integers(0, 2**32 - 1))
def test_policy_grad_matches_finite_differences(seed):
    rng = np.random.default_rng(seed)
    actor = init_mlp([3, 5, 2], rng, output="tanh", scale=2.0)
    critic = init_mlp([5, 6, 1], rng)
    states = rng.normal(size=(4, 3))
    grads, _ = ddpg_policy_grad(actor, critic, states)
    num = numeric_grads(lambda: float(critic_value(critic, actor, states).mean()), actor.params())
    for a, n in zip(grads.arrays(), num):
        assert rel_error(a, n).max() < 1e-4


def small(algorithm, **kw):
    base = dict(algorithm=algorithm, total_steps=300, warmup=60, batch_size=16, hidden=(16,), eval_every=150, eval_episodes=1, seed=2)
    base.update(kw)
    return DeepConfig(**base)


def test_config_validation():
    with pytest.raises(ConfigError):
        DeepConfig(algorithm="sac")
    with pytest.raises(ConfigError):
        DeepConfig(tau=0.0)
    with pytest.raises(ConfigError):
        DeepConfig(lr_q=0.0)


def test_family_mismatch_is_capability_error():
    with pytest.raises(CapabilityError):
        make_agent(pendulum_env(), DeepConfig(algorithm="dqn"))
    with pytest.raises(CapabilityError):
        make_agent(cartpole_env(), DeepConfig(algorithm="ddpg"))


def test_target_nets_mirror_online():
    agent = make_agent(pendulum_env(), DeepConfig(algorithm="pr_ddpg"))
    for name in ("q_pi", "q_phi", "actor_pi", "actor_phi"):
        assert agent.nets[name].layer_sizes == agent.nets[name + "_target"].layer_sizes
        assert all(np.array_equal(a, b) for a, b in zip(agent.nets[name].params(), agent.nets[name + "_target"].params()))


def test_random_pessimist_uniform_actions():
    agent = random_pessimistic_mode(make_agent(cartpole_env(), DeepConfig(algorithm="pr_dqn")), True)
    draws = np.array([agent.pessimistic_action(np.zeros(4), 10**6) for _ in range(30000)])
    assert abs(draws.mean() - 0.5) < 0.02
    cont = random_pessimistic_mode(make_agent(pendulum_env(), DeepConfig(algorithm="pr_ddpg")), True)
    u = np.array([cont.pessimistic_action(np.zeros(3), 10**6)[0] for _ in range(30000)])
    hist = np.histogram(u, bins=4, range=(-2, 2))[0] / len(u)
    assert np.all(np.abs(hist - 0.25) < 0.02)


def test_random_pessimist_freezes_pessimistic_nets():
    agent = random_pessimistic_mode(make_agent(cartpole_env(), DeepConfig(algorithm="pr_dqn", seed=1)), True)
    before = [p.copy() for p in agent.nets["q_phi"].params()]
    rng = np.random.default_rng(0)
    b = batch(
        s=rng.normal(size=(8, 4)), a=rng.integers(2, size=8), c=-np.ones(8), s_next=rng.normal(size=(8, 4)),
        done=np.zeros(8, bool), u=rng.integers(2, size=8), c_p=np.ones(8), x_next=rng.normal(size=(8, 4)), done_x=np.zeros(8, bool),
    )
    losses = update(agent, b)
    assert "loss_q_phi" not in losses
    assert all(np.array_equal(a, p) for a, p in zip(before, agent.nets["q_phi"].params()))


def test_pessimistic_update_ignores_R():
    def phi_after(R):
        agent = make_agent(cartpole_env(), DeepConfig(algorithm="pr_dqn", R=R, seed=4))
        rng = np.random.default_rng(3)
        b = batch(
            s=rng.normal(size=(8, 4)), a=rng.integers(2, size=8), c=-np.ones(8), s_next=rng.normal(size=(8, 4)),
            done=np.zeros(8, bool), u=rng.integers(2, size=8), c_p=np.ones(8), x_next=rng.normal(size=(8, 4)), done_x=np.zeros(8, bool),
        )
        for _ in range(5):
            update(agent, b)
        return agent.nets["q_phi"].params(), agent.nets["q_pi"].params()

    (phi0, pi0), (phi1, pi1) = phi_after(0.0), phi_after(0.7)
    assert all(np.array_equal(a, b) for a, b in zip(phi0, phi1))
    assert not all(np.array_equal(a, b) for a, b in zip(pi0, pi1))


def test_repeated_updates_reduce_critic_loss():
    agent = make_agent(cartpole_env(), DeepConfig(algorithm="dqn", gamma=0.1, tau=1.0, lr_q=3e-3, seed=0))
    rng = np.random.default_rng(0)
    b = batch(s=rng.normal(size=(32, 4)), a=rng.integers(2, size=32), c=rng.normal(size=32), s_next=rng.normal(size=(32, 4)), done=np.ones(32, bool))
    first = update(agent, b)["loss_q_pi"]
    for _ in range(200):
        last = update(agent, b)["loss_q_pi"]
    assert last < 0.1 * first


@pytest.mark.parametrize("algorithm,env", [("pr_dqn", cartpole_env), ("pr_ddpg", pendulum_env), ("r_ddpg", pendulum_env)])
def test_training_reproducible(algorithm, env, tmp_path):
    a = train_deep(env(), small(algorithm, R=0.1))
    b = train_deep(env(), small(algorithm, R=0.1))
    np.testing.assert_equal(a.log, b.log)  # nan-aware
    assert a.episode_returns == b.episode_returns
    assert all(np.array_equal(x, y) for x, y in zip(a.agent.nets["q_pi"].params(), b.agent.nets["q_pi"].params()))
    write_log_csv(tmp_path / "log.csv", a.log)
    back = read_log_csv(tmp_path / "log.csv")
    assert len(back) == len(a.log) == 2


def test_pr_buffer_successors_replay_from_shared_state():
    env = cartpole_env()
    res = train_deep(env, small("pr_dqn", R=0.1))
    rows = res.buffer.oldest_first()
    for s, u, x in zip(rows["s"], rows["u"], rows["x_next"]):
        assert np.array_equal(env.next_state(env.state_from_obs(s), int(u)), x)
