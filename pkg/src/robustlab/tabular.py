"""Tabular learners: Q-Learning, Robust-Q, ARQ-Learning and PRQ-Learning.

All tables hold costs, so state values are ``min_a Q(s, a)``.  The per-sample
update rules are jitted so that the replay loops below can call them millions
of times; they are ordinary callables from Python as well and mutate the
table in place, returning the new entry.
"""

from __future__ import annotations

import time
from dataclasses import asdict, dataclass, field

import numpy as np
from numba import njit

from robustlab.bellman import NeighborTable, argmax_neighbor
from robustlab.errors import ConfigError, ContractError
from robustlab.mdp import evaluate_policy, greedy_policy
from robustlab.replay import ReplayBuffer, shared_state_step, tabular_fields

ALGORITHMS = ("q_learning", "robust_q", "arq", "prq")


# -- update rules -------------------------------------------------------------


@njit(cache=True)
def _check_state(q, s):
    # jitted code does no bounds checking, so a bad index would corrupt memory
    if s < 0 or s >= q.shape[0]:
        raise IndexError("state index out of range")


@njit(cache=True)
def _check_entry(q, s, a):
    _check_state(q, s)
    if a < 0 or a >= q.shape[1]:
        raise IndexError("action index out of range")


@njit(cache=True)
def _vmin(q, s):
    _check_state(q, s)
    v = q[s, 0]
    for a in range(1, q.shape[1]):
        if q[s, a] < v:
            v = q[s, a]
    return v


@njit(cache=True)
def _vmax_all(q):
    best = _vmin(q, 0)
    for s in range(1, q.shape[0]):
        v = _vmin(q, s)
        if v > best:
            best = v
    return best


@njit(cache=True)
def robust_target(c, v_next, v_worst, gamma, R):
    """``c + gamma (1-R) V(s') + gamma R V_worst`` shared by every robust rule."""
    return c + gamma * (1.0 - R) * v_next + gamma * R * v_worst


@njit(cache=True)
def q_learning_update(q, s, a, c, s_next, alpha, gamma, done=False):
    _check_entry(q, s, a)
    v_next = 0.0 if done else _vmin(q, s_next)
    q[s, a] = (1.0 - alpha) * q[s, a] + alpha * (c + gamma * v_next)
    return q[s, a]


@njit(cache=True)
def robust_q_update(q, s, a, c, s_next, alpha, gamma, R, done=False):
    """R-contamination update; the worst value is the max of V over *all* states.

    Returns ``(new entry, running max of V)``.
    """
    _check_entry(q, s, a)
    vmax = _vmax_all(q)
    v_next = 0.0 if done else _vmin(q, s_next)
    q[s, a] = (1.0 - alpha) * q[s, a] + alpha * robust_target(c, v_next, vmax, gamma, R)
    return q[s, a], vmax


@njit(cache=True)
def arq_update(q, s, a, c, s_next, neighbors, alpha, gamma, R, done=False):
    """Adjacent update; the worst value is the max of V over the estimated neighbours of ``s``."""
    _check_entry(q, s, a)
    if neighbors.shape[0] == 0:
        raise ValueError("empty neighbour set")
    worst = _vmin(q, neighbors[0])
    for i in range(1, neighbors.shape[0]):
        v = _vmin(q, neighbors[i])
        if v > worst:
            worst = v
    v_next = 0.0 if done else _vmin(q, s_next)
    q[s, a] = (1.0 - alpha) * q[s, a] + alpha * robust_target(c, v_next, worst, gamma, R)
    return q[s, a]


@njit(cache=True)
def prq_pessimistic_update(q_phi, x, u, c_p, x_next, alpha, gamma, done_x=False):
    _check_entry(q_phi, x, u)
    v_next = 0.0 if done_x else _vmin(q_phi, x_next)
    q_phi[x, u] = (1.0 - alpha) * q_phi[x, u] + alpha * (c_p + gamma * v_next)
    return q_phi[x, u]


@njit(cache=True)
def prq_robust_update(q_pi, s, a, c, s_next, x_next, alpha, gamma, R, done=False, done_x=False):
    """The pessimistic successor ``x'`` stands in for the max over neighbours."""
    _check_entry(q_pi, s, a)
    v_next = 0.0 if done else _vmin(q_pi, s_next)
    v_x = 0.0 if done_x else _vmin(q_pi, x_next)
    q_pi[s, a] = (1.0 - alpha) * q_pi[s, a] + alpha * robust_target(c, v_next, v_x, gamma, R)
    return q_pi[s, a]


_CODES = {"q_learning": 0, "robust_q": 1, "arq": 2, "prq": 3}


@njit(cache=True)
def _apply_batch(code, q, q_phi, idx, S, A, C, S2, D, U, CP, X2, DX, nbr, nbr_len, alpha, gamma, R, train_phi):
    for i in idx:
        s, a = S[i], A[i]
        if code == 0:
            q_learning_update(q, s, a, C[i], S2[i], alpha, gamma, D[i])
        elif code == 1:
            robust_q_update(q, s, a, C[i], S2[i], alpha, gamma, R, D[i])
        elif code == 2:
            arq_update(q, s, a, C[i], S2[i], nbr[s, : nbr_len[s]], alpha, gamma, R, D[i])
        else:
            if train_phi:
                prq_pessimistic_update(q_phi, s, U[i], CP[i], X2[i], alpha, gamma, DX[i])
            prq_robust_update(q, s, a, C[i], S2[i], X2[i], alpha, gamma, R, D[i], DX[i])


# -- training loops -----------------------------------------------------------


@dataclass
class TrainConfig:
    alpha: float = 0.01
    gamma: float = 0.99
    R: float = 0.0
    max_episodes: int = 1000
    max_steps_per_episode: int = 200
    batch_size: int = 32
    buffer_size: int = 20000
    warmup_steps: int = 500
    eps_start: float = 1.0
    eps_end: float = 0.05
    eps_decay_fraction: float = 0.5
    eval_every: int = 50
    eval_episodes: int = 1
    eval_max_steps: int = 200
    online: bool = False
    random_pessimist: bool = False
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.alpha <= 1.0:
            raise ConfigError(f"alpha must lie in (0, 1], got {self.alpha}")
        if not 0.0 < self.gamma < 1.0:
            raise ConfigError(f"gamma must lie in (0, 1), got {self.gamma}")
        if not 0.0 <= self.R <= 1.0:
            raise ConfigError(f"R must lie in [0, 1], got {self.R}")

    def epsilon(self, episode: int) -> float:
        horizon = max(1.0, self.eps_decay_fraction * self.max_episodes)
        frac = min(1.0, episode / horizon)
        return self.eps_start + frac * (self.eps_end - self.eps_start)


@dataclass
class TabularResult:
    algorithm: str
    q: np.ndarray
    neighbors: NeighborTable
    q_phi: np.ndarray | None = None
    log: dict = field(default_factory=dict)
    runtime: float = 0.0
    buffer: ReplayBuffer | None = field(default=None, repr=False)


def epsilon_greedy(q: np.ndarray, s: int, eps: float, rng: np.random.Generator) -> int:
    if rng.random() < eps:
        return int(rng.integers(q.shape[1]))
    return int(np.argmin(q[s]))


class _PaddedNeighbors:
    """Neighbour table mirrored into a padded index matrix for the jitted loop."""

    def __init__(self, table: NeighborTable):
        n = table.n_states
        self.table = table
        self.idx = np.zeros((n, n), dtype=np.int64)
        self.idx[:, 0] = np.arange(n)
        self.len = np.ones(n, dtype=np.int64)

    def add(self, s: int, s2: int) -> None:
        entry = self.table._sets.get(s)
        if entry is not None and s2 in entry:
            return
        self.table.add(s, s2)
        arr = self.table.get(s)
        self.idx[s, : len(arr)] = arr
        self.len[s] = len(arr)


def train_tabular(env, algorithm: str, config: TrainConfig) -> TabularResult:
    """Replay-based training loop shared by the four tabular algorithms.

    Each episode alternates environment steps with one minibatch update step
    per environment step once ``warmup_steps`` samples are stored.  PRQ samples
    through the shared-state double-agent step.
    """
    if algorithm not in ALGORITHMS:
        raise ConfigError(f"unknown tabular algorithm {algorithm!r}")
    code = _CODES[algorithm]
    double = algorithm == "prq"
    rng = np.random.default_rng(config.seed)
    n_s, n_a = env.n_states, env.n_actions
    q = np.zeros((n_s, n_a))
    q_phi = np.zeros((n_s, n_a))
    neighbors = _PaddedNeighbors(NeighborTable(n_s, include_self=True))
    buffer = ReplayBuffer(config.buffer_size, tabular_fields(double_agent=True), seed=config.seed + 1)
    cols = buffer.data
    alpha, gamma, R = config.alpha, config.gamma, config.R
    train_phi = not config.random_pessimist

    log = {"episode_returns": [], "episode_lengths": [], "checkpoints": []}
    steps = 0
    t0 = time.perf_counter()
    env.reset(seed=config.seed)
    for episode in range(config.max_episodes):
        eps = config.epsilon(episode)
        s = env.reset()
        total, length = 0.0, 0
        for _ in range(config.max_steps_per_episode):
            a = epsilon_greedy(q, s, eps, rng)
            if double:
                u = int(rng.integers(n_a)) if config.random_pessimist else epsilon_greedy(q_phi, s, eps, rng)
                t, _ = shared_state_step(env, s, a, u)
                buffer.add_transition(t)
                s2, c, done = t.s_next, t.c, t.done
            else:
                s2, c, done, _, _ = env.step(a)
                buffer.add(s=s, a=a, c=c, s_next=s2, done=done, u=0, c_p=0.0, x_next=0, done_x=False)
            neighbors.add(s, s2)
            steps += 1
            total += c
            length += 1

            if config.online:
                idx = np.array([(buffer._next - 1) % buffer.capacity])
            elif len(buffer) >= config.warmup_steps:
                idx = buffer.sample_indices(config.batch_size)
            else:
                idx = None
            if idx is not None:
                _apply_batch(
                    code, q, q_phi, idx,
                    cols["s"], cols["a"], cols["c"], cols["s_next"], cols["done"],
                    cols["u"], cols["c_p"], cols["x_next"], cols["done_x"],
                    neighbors.idx, neighbors.len, alpha, gamma, R, train_phi,
                )
            s = s2
            if done:
                break
        log["episode_returns"].append(-total)
        log["episode_lengths"].append(length)
        if config.eval_every and ((episode + 1) % config.eval_every == 0 or episode + 1 == config.max_episodes):
            rep = evaluate_policy(env, greedy_policy(q), config.eval_episodes, config.eval_max_steps, seed=config.seed)
            log["checkpoints"].append(
                {"episode": episode + 1, "mean_return": rep.mean_return, "std_return": rep.std_return}
            )
    log["env_steps"] = steps
    if not np.all(np.isfinite(q)):
        raise ContractError("non-finite entries in the learned Q-table")
    return TabularResult(
        algorithm=algorithm,
        q=q,
        neighbors=neighbors.table,
        q_phi=q_phi if double else None,
        log=log,
        runtime=time.perf_counter() - t0,
        buffer=buffer,
    )


def q_learning_train(env, config: TrainConfig) -> TabularResult:
    return train_tabular(env, "q_learning", config)


def robust_q_train(env, config: TrainConfig) -> TabularResult:
    return train_tabular(env, "robust_q", config)


def arq_train(env, config: TrainConfig) -> TabularResult:
    return train_tabular(env, "arq", config)


def prq_train(env, config: TrainConfig) -> TabularResult:
    return train_tabular(env, "prq", config)


# -- max-state comparison -------------------------------------------------------


@dataclass
class MaxStateReport:
    states: list
    maximizers: list
    successors: list
    matches: list

    @property
    def agreement(self) -> float:
        return float(np.mean(self.matches)) if self.matches else float("nan")


def pessimistic_successor(env, q_phi: np.ndarray, s: int) -> int:
    """Most likely nominal successor of the pessimistic greedy action at ``s``."""
    u = int(np.argmin(q_phi[s]))
    outcomes = env.transitions(s, u)
    return int(max(outcomes, key=lambda o: o[0])[1])


def max_state_report(env, q_pi: np.ndarray, neighbors: NeighborTable, q_phi: np.ndarray, states=None) -> MaxStateReport:
    """Compare ``argmax_{N_s} V^pi`` with the state the pessimistic agent moves to.

    A state counts as agreeing when the pessimistic successor attains the
    neighbourhood maximum of ``V^pi`` (ties are not penalised).
    """
    v = q_pi.min(axis=1)
    states = range(len(v)) if states is None else states
    rep = MaxStateReport([], [], [], [])
    for s in states:
        m = argmax_neighbor(v, neighbors, s)
        x = pessimistic_successor(env, q_phi, s)
        rep.states.append(int(s))
        rep.maximizers.append(m)
        rep.successors.append(x)
        rep.matches.append(bool(x in neighbors[s] and v[x] == v[m]))
    return rep


def config_dict(config: TrainConfig) -> dict:
    return asdict(config)
