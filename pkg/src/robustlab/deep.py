"""Deep learners: DQN, R-DQN, PR-DQN for discrete actions and DDPG, R-DDPG, PR-DDPG
for continuous ones.

Everything is in cost form: critics estimate discounted cost, the DQN policy is
the argmin over actions and actors descend ``Q(s, actor(s))``.  The PR variants
run a second, pessimistic agent on the negated cost; its one-step successor
``x'`` from the shared state replaces the max over neighbouring states in the
robust target.
"""

from __future__ import annotations

import csv
import logging
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from robustlab.errors import CapabilityError, ConfigError, DivergenceError
from robustlab.mdp import EvalReport, evaluate_policy
from robustlab.neural import (
    AdamState,
    GradBundle,
    MlpNet,
    adam_step,
    backward,
    forward,
    init_mlp,
    save_net,
    soft_update,
)
from robustlab.replay import DoubleAgentTransition, ReplayBuffer, shared_state_step, vector_fields
from robustlab.tabular import robust_target as _robust_target_jit

log = logging.getLogger(__name__)

DQN_FAMILY = ("dqn", "r_dqn", "pr_dqn")
DDPG_FAMILY = ("ddpg", "r_ddpg", "pr_ddpg")
DEEP_ALGORITHMS = DQN_FAMILY + DDPG_FAMILY
LOG_COLUMNS = (
    "step",
    "train_return",
    "eval_return_mean",
    "eval_return_std",
    "loss_q_pi",
    "loss_q_phi",
    "loss_actor_pi",
    "loss_actor_phi",
)

# same expression as the tabular rules, applied elementwise to batches
robust_target = _robust_target_jit.py_func


@dataclass
class DeepConfig:
    algorithm: str = "pr_dqn"
    total_steps: int = 50000
    gamma: float = 0.99
    R: float = 0.0
    lr_q: float = 1e-3
    lr_actor: float = 1e-3
    tau: float = 0.005
    batch_size: int = 64
    buffer_size: int = 100000
    warmup: int = 1000
    hidden: tuple = (64, 64)
    eps_start: float = 1.0
    eps_end: float = 0.05
    eps_fraction: float = 0.1
    action_noise: float = 0.1  # Gaussian std as a fraction of the action bound
    vmax_capacity: int = 10000
    eval_every: int = 5000
    eval_episodes: int = 5
    random_pessimist: bool = False
    seed: int = 0

    def __post_init__(self):
        self.hidden = tuple(int(h) for h in self.hidden)
        if self.algorithm not in DEEP_ALGORITHMS:
            raise ConfigError(f"unknown algorithm {self.algorithm!r}; choose from {DEEP_ALGORITHMS}")
        if not 0.0 <= self.R <= 1.0:
            raise ConfigError(f"R must lie in [0, 1], got {self.R}")
        if not 0.0 < self.gamma < 1.0:
            raise ConfigError(f"gamma must lie in (0, 1), got {self.gamma}")
        if not 0.0 < self.tau <= 1.0:
            raise ConfigError(f"tau must lie in (0, 1], got {self.tau}")
        if not (self.lr_q > 0 and self.lr_actor > 0):
            raise ConfigError("learning rates must be > 0")
        if self.batch_size < 1 or self.total_steps < 1 or self.eval_every < 1:
            raise ConfigError("batch_size, total_steps and eval_every must be >= 1")

    @property
    def double_agent(self) -> bool:
        return self.algorithm.startswith("pr_")

    @property
    def discrete(self) -> bool:
        return self.algorithm in DQN_FAMILY


# -- targets ------------------------------------------------------------------------


class ValueBuffer:
    """FIFO of recent bootstrap values; its max stands in for the max of V over all states."""

    def __init__(self, capacity: int = 10000):
        self.values = np.zeros(capacity)
        self.capacity = capacity
        self.size = 0
        self._next = 0

    def __len__(self):
        return self.size

    def extend(self, values) -> None:
        for v in np.asarray(values, dtype=float).ravel():
            self.values[self._next] = v
            self._next = (self._next + 1) % self.capacity
            self.size = min(self.size + 1, self.capacity)

    def max(self) -> float:
        if self.size == 0:
            raise IndexError("empty value buffer")
        return float(self.values[: self.size].max())


def min_q(net: MlpNet, obs) -> np.ndarray:
    return forward(net, obs)[0].min(axis=-1)


def _mask(values, done) -> np.ndarray:
    return np.where(np.asarray(done, dtype=bool), 0.0, values)


def dqn_target(batch: dict, q_target: MlpNet, gamma: float) -> np.ndarray:
    return batch["c"] + gamma * _mask(min_q(q_target, batch["s_next"]), batch["done"])


def pr_dqn_pessimistic_target(batch: dict, q_phi_target: MlpNet, gamma: float) -> np.ndarray:
    """``c^p + gamma min_u Qbar_phi(x', u)``; no dependence on R."""
    return batch["c_p"] + gamma * _mask(min_q(q_phi_target, batch["x_next"]), batch["done_x"])


def pr_dqn_robust_target(batch: dict, q_pi_target: MlpNet, gamma: float, R: float) -> np.ndarray:
    v_next = _mask(min_q(q_pi_target, batch["s_next"]), batch["done"])
    v_x = _mask(min_q(q_pi_target, batch["x_next"]), batch["done_x"])
    return robust_target(batch["c"], v_next, v_x, gamma, R)


def r_dqn_target(batch: dict, q_pi_target: MlpNet, gamma: float, R: float, vmax: ValueBuffer) -> np.ndarray:
    """Adds this batch's ``Vbar(s')`` to ``vmax`` and uses the buffer max as the worst value."""
    v_next = _mask(min_q(q_pi_target, batch["s_next"]), batch["done"])
    vmax.extend(v_next[~np.asarray(batch["done"], dtype=bool)])
    worst = vmax.max() if len(vmax) else v_next
    return robust_target(batch["c"], v_next, worst, gamma, R)


def critic_value(critic: MlpNet, actor: MlpNet, obs) -> np.ndarray:
    """``Q(s, actor(s))`` for a batch of observations."""
    obs = np.asarray(obs, dtype=float)
    return forward(critic, np.concatenate([obs, forward(actor, obs)[0]], axis=-1))[0][..., 0]


def ddpg_target(batch: dict, critic_t: MlpNet, actor_t: MlpNet, gamma: float) -> np.ndarray:
    return batch["c"] + gamma * _mask(critic_value(critic_t, actor_t, batch["s_next"]), batch["done"])


def pr_ddpg_targets(
    batch: dict,
    critic_pi_t: MlpNet,
    actor_pi_t: MlpNet,
    critic_phi_t: MlpNet,
    actor_phi_t: MlpNet,
    gamma: float,
    R: float,
):
    """Returns ``(y_pi, y_phi)``; target actors are evaluated deterministically."""
    v_next = _mask(critic_value(critic_pi_t, actor_pi_t, batch["s_next"]), batch["done"])
    v_x = _mask(critic_value(critic_pi_t, actor_pi_t, batch["x_next"]), batch["done_x"])
    y_pi = robust_target(batch["c"], v_next, v_x, gamma, R)
    y_phi = batch["c_p"] + gamma * _mask(critic_value(critic_phi_t, actor_phi_t, batch["x_next"]), batch["done_x"])
    return y_pi, y_phi


def r_ddpg_target(batch: dict, critic_t: MlpNet, actor_t: MlpNet, gamma: float, R: float, vmax: ValueBuffer):
    v_next = _mask(critic_value(critic_t, actor_t, batch["s_next"]), batch["done"])
    vmax.extend(v_next[~np.asarray(batch["done"], dtype=bool)])
    worst = vmax.max() if len(vmax) else v_next
    return robust_target(batch["c"], v_next, worst, gamma, R)


def ddpg_policy_grad(actor: MlpNet, critic: MlpNet, states):
    """Gradient of ``mean_x Q(x, actor(x))`` w.r.t. the actor's parameters.

    The critic is only read.  Returns ``(GradBundle, loss)``.
    """
    states = np.atleast_2d(np.asarray(states, dtype=float))
    n = states.shape[0]
    act, a_cache = forward(actor, states)
    q, q_cache = forward(critic, np.concatenate([states, act], axis=1))
    _, g_in = backward(critic, q_cache, np.full_like(q, 1.0 / n))
    grads, _ = backward(actor, a_cache, g_in[:, states.shape[1] :])
    return grads, float(q.mean())


def mse_grad(pred: np.ndarray, y: np.ndarray):
    """``mean((pred - y)^2)`` and its gradient w.r.t. ``pred``."""
    d = pred - y
    return float(np.mean(d * d)), 2.0 * d / d.size


# -- agents ---------------------------------------------------------------------------


@dataclass
class DeepAgent:
    """Online and target networks for one run, keyed ``q_pi``, ``q_phi``, ``actor_pi``, ``actor_phi``.

    Target copies carry a ``_target`` suffix.
    """

    config: DeepConfig
    nets: dict
    opt: dict
    action_dim: int
    action_bound: float
    n_actions: int
    rng: np.random.Generator
    random_pessimist: bool = False
    vmax: ValueBuffer | None = None

    def epsilon(self, step: int) -> float:
        cfg = self.config
        span = max(1, int(cfg.eps_fraction * cfg.total_steps))
        frac = min(1.0, step / span)
        return cfg.eps_start + frac * (cfg.eps_end - cfg.eps_start)

    def greedy(self, obs, which: str = "pi"):
        if self.config.discrete:
            return int(np.argmin(forward(self.nets["q_" + which], obs)[0]))
        return forward(self.nets["actor_" + which], obs)[0].copy()

    def _explore(self, obs, which: str, step: int):
        if self.config.discrete:
            if self.rng.random() < self.epsilon(step):
                return int(self.rng.integers(self.n_actions))
            return self.greedy(obs, which)
        if step <= self.config.warmup:
            return self.rng.uniform(-self.action_bound, self.action_bound, size=self.action_dim)
        a = self.greedy(obs, which) + self.rng.normal(0.0, self.config.action_noise * self.action_bound, self.action_dim)
        return np.clip(a, -self.action_bound, self.action_bound)

    def robust_action(self, obs, step: int):
        return self._explore(obs, "pi", step)

    def pessimistic_action(self, obs, step: int):
        if self.random_pessimist:
            if self.config.discrete:
                return int(self.rng.integers(self.n_actions))
            return self.rng.uniform(-self.action_bound, self.action_bound, size=self.action_dim)
        return self._explore(obs, "phi", step)

    def policy(self):
        return lambda obs: self.greedy(obs, "pi")

    def save(self, directory) -> list:
        from pathlib import Path

        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        paths = []
        for name, net in sorted(self.nets.items()):
            p = directory / f"{name}.npz"
            save_net(p, net)
            paths.append(p)
        return paths


def random_pessimistic_mode(agent: DeepAgent, flag: bool) -> DeepAgent:
    """Uniform random pessimistic actions and no pessimistic updates when ``flag`` is set."""
    agent.random_pessimist = bool(flag)
    return agent


def _env_dims(env, discrete: bool):
    obs_dim = int(getattr(env, "obs_dim", getattr(env, "state_dim", 0)))
    if discrete:
        if not getattr(env, "discrete", False):
            raise CapabilityError(f"{env.name} has continuous actions; use the DDPG family")
        return obs_dim, 1, 1.0, int(env.n_actions)
    if getattr(env, "discrete", False):
        raise CapabilityError(f"{env.name} has discrete actions; use the DQN family")
    return obs_dim, int(env.action_dim), float(env.action_high), 0


def make_agent(env, config: DeepConfig, rng: np.random.Generator | None = None) -> DeepAgent:
    rng = np.random.default_rng(config.seed) if rng is None else rng
    obs_dim, action_dim, bound, n_actions = _env_dims(env, config.discrete)
    hidden = list(config.hidden)
    nets = {}
    names = ("pi", "phi") if config.double_agent else ("pi",)
    for which in names:
        if config.discrete:
            nets["q_" + which] = init_mlp([obs_dim, *hidden, n_actions], rng)
        else:
            nets["q_" + which] = init_mlp([obs_dim + action_dim, *hidden, 1], rng, final_limit=3e-3)
            nets["actor_" + which] = init_mlp([obs_dim, *hidden, action_dim], rng, "tanh", bound, final_limit=3e-3)
    for name in list(nets):
        nets[name + "_target"] = nets[name].copy()
    opt = {name: AdamState.for_net(net) for name, net in nets.items() if not name.endswith("_target")}
    vmax = ValueBuffer(config.vmax_capacity) if config.algorithm in ("r_dqn", "r_ddpg") else None
    return DeepAgent(config, nets, opt, action_dim, bound, n_actions, rng, config.random_pessimist, vmax)


# -- updates ------------------------------------------------------------------------------


def _q_regress(agent: DeepAgent, name: str, obs, actions, y) -> float:
    net = agent.nets[name]
    out, cache = forward(net, obs)
    rows = np.arange(out.shape[0])
    loss, g = mse_grad(out[rows, actions], y)
    g_out = np.zeros_like(out)
    g_out[rows, actions] = g
    grads, _ = backward(net, cache, g_out)
    adam_step(net, grads, agent.opt[name], agent.config.lr_q, label=name)
    return loss


def _critic_regress(agent: DeepAgent, name: str, obs, actions, y) -> float:
    net = agent.nets[name]
    out, cache = forward(net, np.concatenate([obs, actions.reshape(len(obs), -1)], axis=1))
    loss, g = mse_grad(out[:, 0], y)
    grads, _ = backward(net, cache, g[:, None])
    adam_step(net, grads, agent.opt[name], agent.config.lr_q, label=name)
    return loss


def _actor_step(agent: DeepAgent, which: str, obs) -> float:
    grads, loss = ddpg_policy_grad(agent.nets["actor_" + which], agent.nets["q_" + which], obs)
    adam_step(agent.nets["actor_" + which], grads, agent.opt["actor_" + which], agent.config.lr_actor, label="actor_" + which)
    return loss


def update(agent: DeepAgent, batch: dict) -> dict:
    """One gradient step on every trainable net, then soft target updates.  Returns the losses."""
    cfg, nets = agent.config, agent.nets
    train_phi = cfg.double_agent and not agent.random_pessimist
    losses = {}
    if cfg.discrete:
        a = batch["a"].astype(np.int64)
        if cfg.algorithm == "dqn":
            y = dqn_target(batch, nets["q_pi_target"], cfg.gamma)
        elif cfg.algorithm == "r_dqn":
            y = r_dqn_target(batch, nets["q_pi_target"], cfg.gamma, cfg.R, agent.vmax)
        else:
            y = pr_dqn_robust_target(batch, nets["q_pi_target"], cfg.gamma, cfg.R)
        if train_phi:
            y_phi = pr_dqn_pessimistic_target(batch, nets["q_phi_target"], cfg.gamma)
        losses["loss_q_pi"] = _q_regress(agent, "q_pi", batch["s"], a, y)
        if train_phi:
            losses["loss_q_phi"] = _q_regress(agent, "q_phi", batch["s"], batch["u"].astype(np.int64), y_phi)
    else:
        if cfg.algorithm == "ddpg":
            y = ddpg_target(batch, nets["q_pi_target"], nets["actor_pi_target"], cfg.gamma)
        elif cfg.algorithm == "r_ddpg":
            y = r_ddpg_target(batch, nets["q_pi_target"], nets["actor_pi_target"], cfg.gamma, cfg.R, agent.vmax)
        else:
            y, y_phi = pr_ddpg_targets(
                batch,
                nets["q_pi_target"],
                nets["actor_pi_target"],
                nets["q_phi_target"],
                nets["actor_phi_target"],
                cfg.gamma,
                cfg.R,
            )
        losses["loss_q_pi"] = _critic_regress(agent, "q_pi", batch["s"], batch["a"], y)
        if train_phi:
            losses["loss_q_phi"] = _critic_regress(agent, "q_phi", batch["s"], batch["u"], y_phi)
        losses["loss_actor_pi"] = _actor_step(agent, "pi", batch["s"])
        if train_phi:
            losses["loss_actor_phi"] = _actor_step(agent, "phi", batch["s"])
    for name in agent.opt:
        if name.endswith("phi") and not train_phi:
            continue
        soft_update(nets[name + "_target"], nets[name], cfg.tau)
    return losses


# -- training loop ----------------------------------------------------------------------------


@dataclass
class DeepResult:
    algorithm: str
    agent: DeepAgent
    log: list  # rows keyed by LOG_COLUMNS
    runtime: float
    env_steps: int
    episode_returns: list = field(default_factory=list)
    buffer: ReplayBuffer | None = field(default=None, repr=False)

    def policy(self):
        return self.agent.policy()


def _nominal_step(env, obs, a):
    s_next, c, done, truncated, _ = env.step(a)
    return DoubleAgentTransition(obs, a, c, s_next, a, 0.0, s_next, bool(done), bool(done)), truncated


def evaluate_agent(agent: DeepAgent, env, episodes: int, seed: int) -> EvalReport:
    return evaluate_policy(env, agent.policy(), episodes, env.max_episode_steps, seed)


def train_deep(env, config: DeepConfig, eval_env=None) -> DeepResult:
    """Train one agent for ``config.total_steps`` environment steps.

    Double-agent variants collect shared-state records, so ``env`` must
    support ``get_state``/``set_state``.  Raises ``DivergenceError`` naming
    the step if any parameter becomes non-finite.
    """
    cfg = config
    rng = np.random.default_rng(cfg.seed)
    agent = make_agent(env, cfg, rng)
    if cfg.double_agent and not (hasattr(env, "get_state") and hasattr(env, "set_state")):
        raise CapabilityError(f"{type(env).__name__} cannot be reset to an arbitrary state")
    eval_env = env.with_params() if eval_env is None else eval_env
    obs_dim = agent.nets["q_pi"].layer_sizes[0] - (0 if cfg.discrete else agent.action_dim)
    if cfg.discrete:
        fields = vector_fields(obs_dim, (), np.int64, cfg.double_agent)
    else:
        fields = vector_fields(obs_dim, (agent.action_dim,), float, cfg.double_agent)
    buffer = ReplayBuffer(cfg.buffer_size, fields, seed=int(rng.integers(2**31)))

    rows, returns = [], []
    loss_acc = {k: [] for k in LOG_COLUMNS[4:]}
    recent = []
    t0 = time.perf_counter()
    obs = env.reset(seed=cfg.seed)
    ep_return = 0.0
    for step in range(1, cfg.total_steps + 1):
        a = agent.robust_action(obs, step)
        if cfg.double_agent:
            t, truncated = shared_state_step(env, obs, a, agent.pessimistic_action(obs, step))
        else:
            t, truncated = _nominal_step(env, obs, a)
        buffer.add_transition(t)
        ep_return -= t.c
        if t.done or truncated:
            returns.append(ep_return)
            recent.append(ep_return)
            ep_return = 0.0
            obs = env.reset()
        else:
            obs = t.s_next

        if step > cfg.warmup and len(buffer) >= cfg.batch_size:
            try:
                losses = update(agent, buffer.sample(cfg.batch_size))
            except DivergenceError as exc:
                raise DivergenceError(f"{cfg.algorithm} seed {cfg.seed} diverged at step {step}: {exc}") from exc
            for k, v in losses.items():
                loss_acc[k].append(v)

        if step % cfg.eval_every == 0 or step == cfg.total_steps:
            rep = evaluate_agent(agent, eval_env, cfg.eval_episodes, seed=10_000 + cfg.seed)
            row = {
                "step": step,
                "train_return": float(np.mean(recent)) if recent else float("nan"),
                "eval_return_mean": rep.mean_return,
                "eval_return_std": rep.std_return,
            }
            for k, vals in loss_acc.items():
                row[k] = float(np.mean(vals)) if vals else float("nan")
                vals.clear()
            recent = []
            rows.append(row)
            log.info("%s seed=%d step=%d eval=%.1f", cfg.algorithm, cfg.seed, step, rep.mean_return)
    return DeepResult(cfg.algorithm, agent, rows, time.perf_counter() - t0, cfg.total_steps, returns, buffer)


def dqn_train(env, config: DeepConfig) -> DeepResult:
    return train_deep(env, _with(config, "dqn"))


def r_dqn_train(env, config: DeepConfig) -> DeepResult:
    return train_deep(env, _with(config, "r_dqn"))


def pr_dqn_train(env, config: DeepConfig) -> DeepResult:
    return train_deep(env, _with(config, "pr_dqn"))


def ddpg_train(env, config: DeepConfig) -> DeepResult:
    return train_deep(env, _with(config, "ddpg"))


def r_ddpg_train(env, config: DeepConfig) -> DeepResult:
    return train_deep(env, _with(config, "r_ddpg"))


def pr_ddpg_train(env, config: DeepConfig) -> DeepResult:
    return train_deep(env, _with(config, "pr_ddpg"))


def _with(config: DeepConfig, algorithm: str) -> DeepConfig:
    return DeepConfig(**{**asdict(config), "algorithm": algorithm})


def write_log_csv(path, rows: list) -> None:
    with open(path, "w", newline="") as f:
        w = csv.DictWriter(f, fieldnames=list(LOG_COLUMNS), restval="nan")
        w.writeheader()
        for row in rows:
            w.writerow({k: row.get(k, float("nan")) for k in LOG_COLUMNS})


def read_log_csv(path) -> list:
    with open(path, newline="") as f:
        return [{k: float(v) for k, v in row.items()} for row in csv.DictReader(f)]


def deep_config_dict(config: DeepConfig) -> dict:
    d = asdict(config)
    d["hidden"] = list(config.hidden)
    return d


__all__ = [
    "DEEP_ALGORITHMS",
    "DeepAgent",
    "DeepConfig",
    "DeepResult",
    "GradBundle",
    "ValueBuffer",
    "ddpg_policy_grad",
    "dqn_target",
    "pr_ddpg_targets",
    "pr_dqn_pessimistic_target",
    "pr_dqn_robust_target",
    "r_dqn_target",
    "random_pessimistic_mode",
    "train_deep",
]
