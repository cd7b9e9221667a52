"""Tabular MDPs, Q-tables, greedy policies and episode evaluation.

Everything in this package is expressed in terms of *cost* (to be minimised).
Environments that are conventionally reward based report ``cost = -reward``;
evaluation reports flip the sign back so plotted numbers read as rewards.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

ROW_SUM_TOL = 1e-9


@dataclass(frozen=True)
class TabularMdp:
    """Finite MDP ``(S, A, P, c, gamma)``.

    ``kernel[s, a, s2]`` is the probability of moving to ``s2`` and
    ``cost[s, a]`` the immediate cost.
    """

    kernel: np.ndarray
    cost: np.ndarray
    gamma: float

    @property
    def n_states(self) -> int:
        return self.kernel.shape[0]

    @property
    def n_actions(self) -> int:
        return self.kernel.shape[1]


def validate_mdp(mdp: TabularMdp) -> list[str]:
    """Return a list of human readable invariant violations (empty if valid)."""
    problems = []
    kernel = np.asarray(mdp.kernel, dtype=float)
    cost = np.asarray(mdp.cost, dtype=float)
    if kernel.ndim != 3 or kernel.shape[0] != kernel.shape[2]:
        problems.append(f"kernel shape {kernel.shape} is not (S, A, S)")
        return problems
    n_s, n_a, _ = kernel.shape
    if n_s < 1 or n_a < 1:
        problems.append("empty state or action space")
    if cost.shape != (n_s, n_a):
        problems.append(f"cost shape {cost.shape} does not match ({n_s}, {n_a})")
    elif not np.all(np.isfinite(cost)):
        for s, a in zip(*np.nonzero(~np.isfinite(cost))):
            problems.append(f"non-finite cost at (s={s},a={a})")
    if not (0.0 < mdp.gamma < 1.0):
        problems.append(f"gamma out of (0,1): {mdp.gamma}")
    for s in range(n_s):
        for a in range(n_a):
            row = kernel[s, a]
            if np.any(row < 0) or not np.all(np.isfinite(row)):
                problems.append(f"negative or non-finite probability at (s={s},a={a})")
            total = float(row.sum())
            if abs(total - 1.0) > ROW_SUM_TOL:
                problems.append(f"row sum {total:.12g} at (s={s},a={a})")
    return problems


def new_q_table(n_states: int, n_actions: int) -> np.ndarray:
    return np.zeros((n_states, n_actions))


def state_value(q: np.ndarray, s: int) -> float:
    """``V(s) = min_a Q(s, a)``."""
    if not 0 <= s < q.shape[0]:
        raise IndexError(f"state {s} out of range for {q.shape[0]} states")
    return float(q[s].min())


def state_values(q: np.ndarray) -> np.ndarray:
    return q.min(axis=1)


@dataclass(frozen=True)
class TabularPolicy:
    """Deterministic (``actions`` is 1-D) or stochastic (2-D rows) policy."""

    actions: np.ndarray
    rng_seed: int | None = None
    _rng: np.random.Generator = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "_rng", np.random.default_rng(self.rng_seed))

    @property
    def deterministic(self) -> bool:
        return self.actions.ndim == 1

    def validate(self, n_actions: int) -> list[str]:
        problems = []
        if self.deterministic:
            bad = np.nonzero((self.actions < 0) | (self.actions >= n_actions))[0]
            problems += [f"action index out of range at s={s}" for s in bad]
        else:
            for s, row in enumerate(self.actions):
                if np.any(row < 0) or abs(row.sum() - 1.0) > ROW_SUM_TOL:
                    problems.append(f"invalid probability row at s={s}")
        return problems

    def __call__(self, s) -> int:
        s = int(s)
        if self.deterministic:
            return int(self.actions[s])
        return int(self._rng.choice(self.actions.shape[1], p=self.actions[s]))


def greedy_actions(q: np.ndarray) -> np.ndarray:
    # np.argmin returns the first minimiser, i.e. the lowest action index on ties
    return np.argmin(q, axis=1)


def greedy_policy(q: np.ndarray) -> TabularPolicy:
    return TabularPolicy(greedy_actions(q))


@dataclass
class EvalReport:
    mean_return: float
    std_return: float
    episode_returns: list[float]
    episodes: int
    seed: int
    truncated: list[bool] = field(default_factory=list)

    @classmethod
    def from_returns(cls, returns: Sequence[float], seed: int, truncated=None) -> "EvalReport":
        arr = np.asarray(returns, dtype=float)
        return cls(
            mean_return=float(arr.mean()),
            std_return=float(arr.std()),
            episode_returns=[float(x) for x in arr],
            episodes=len(arr),
            seed=seed,
            truncated=list(truncated) if truncated is not None else [False] * len(arr),
        )

    @property
    def n_truncated(self) -> int:
        return sum(self.truncated)

    def to_dict(self) -> dict:
        return {
            "mean_return": self.mean_return,
            "std_return": self.std_return,
            "episode_returns": self.episode_returns,
            "episodes": self.episodes,
            "seed": self.seed,
            "truncated": self.truncated,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "EvalReport":
        """Extra keys (such as the perturbation level stored alongside) are ignored."""
        names = ("mean_return", "std_return", "episode_returns", "episodes", "seed", "truncated")
        return cls(**{k: d[k] for k in names if k in d})


def evaluate_policy(
    env,
    policy: Callable,
    episodes: int,
    max_steps: int,
    seed: int,
) -> EvalReport:
    """Run ``episodes`` episodes seeded ``seed, seed+1, ...``.

    Returns undiscounted per-episode *reward* (``-cost``).  Episodes hitting
    ``max_steps`` are cut short and flagged in ``truncated``.
    """
    if episodes < 1:
        raise ValueError("episodes must be >= 1")
    returns, truncated = [], []
    for i in range(episodes):
        obs = env.reset(seed=seed + i)
        total_cost = 0.0
        cut = True
        for _ in range(max_steps):
            obs, cost, terminated, trunc, _ = env.step(policy(obs))
            total_cost += cost
            if terminated or trunc:
                cut = not terminated and trunc
                break
        returns.append(-total_cost)
        truncated.append(cut)
    return EvalReport.from_returns(returns, seed, truncated)


# --- plain-text MDP format -------------------------------------------------
#
#   # comments and blank lines are ignored
#   <states> <actions> <gamma>
#   <states> lines of <actions> costs
#   <states*actions> lines of <states> probabilities, ordered s-major


def dumps_mdp(mdp: TabularMdp) -> str:
    lines = [f"{mdp.n_states} {mdp.n_actions} {mdp.gamma!r}"]
    lines += [" ".join(repr(float(x)) for x in row) for row in mdp.cost]
    for s in range(mdp.n_states):
        for a in range(mdp.n_actions):
            lines.append(" ".join(repr(float(x)) for x in mdp.kernel[s, a]))
    return "\n".join(lines) + "\n"


def loads_mdp(text: str) -> TabularMdp:
    rows = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if line:
            rows.append((lineno, line.split()))
    if not rows:
        raise ValueError("empty MDP file")
    lineno, head = rows[0]
    if len(head) != 3:
        raise ValueError(f"line {lineno}: header must be 'states actions gamma'")
    n_s, n_a, gamma = int(head[0]), int(head[1]), float(head[2])
    expected = 1 + n_s + n_s * n_a
    if len(rows) != expected:
        raise ValueError(f"expected {expected} data lines, found {len(rows)}")

    def parse(i, width):
        lineno, toks = rows[i]
        if len(toks) != width:
            raise ValueError(f"line {lineno}: expected {width} numbers, got {len(toks)}")
        return [float(t) for t in toks]

    cost = np.array([parse(1 + s, n_a) for s in range(n_s)])
    kernel = np.array([parse(1 + n_s + k, n_s) for k in range(n_s * n_a)]).reshape(n_s, n_a, n_s)
    return TabularMdp(kernel=kernel, cost=cost, gamma=gamma)


def save_mdp(mdp: TabularMdp, path) -> None:
    Path(path).write_text(dumps_mdp(mdp))


def load_mdp(path) -> TabularMdp:
    return loads_mdp(Path(path).read_text())


def random_mdp(
    rng: np.random.Generator,
    n_states: int,
    n_actions: int,
    gamma: float,
    support: int | None = None,
    include_self: bool = True,
) -> TabularMdp:
    """Random MDP with costs in [0, 1]; each kernel row has ``support`` successors.

    With ``include_self`` the first action of every state keeps some mass on
    the state itself, so that ``s`` is in its own neighbouring set.
    """
    support = n_states if support is None else min(support, n_states)
    kernel = np.zeros((n_states, n_actions, n_states))
    for s in range(n_states):
        for a in range(n_actions):
            succ = rng.choice(n_states, size=support, replace=False)
            if include_self and a == 0 and s not in succ:
                succ[0] = s
            kernel[s, a, succ] = rng.dirichlet(np.ones(support))
    cost = rng.uniform(0.0, 1.0, size=(n_states, n_actions))
    return TabularMdp(kernel=kernel, cost=cost, gamma=gamma)

