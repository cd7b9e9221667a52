"""Replay storage and shared-state double-agent sampling."""

from __future__ import annotations

from typing import Callable, NamedTuple

import numpy as np

from robustlab.errors import CapabilityError


class DoubleAgentTransition(NamedTuple):
    """One shared-state record ``(s, a, c, s', u, c^p, x')``.

    ``c_p`` is the negated cost of the pessimistic step taken from ``s``;
    ``done``/``done_x`` mark terminal successors on each branch.
    """

    s: object
    a: object
    c: float
    s_next: object
    u: object
    c_p: float
    x_next: object
    done: bool = False
    done_x: bool = False


class ReplayBuffer:
    """Bounded FIFO of records stored column-wise; uniform sampling with replacement.

    ``fields`` maps a column name to ``(shape, dtype)`` of a single entry.
    """

    def __init__(self, capacity: int, fields: dict, seed: int | None = None):
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        self.capacity = capacity
        self.data = {k: np.zeros((capacity, *shape), dtype=dtype) for k, (shape, dtype) in fields.items()}
        self.rng = np.random.default_rng(seed)
        self._next = 0
        self.size = 0

    def __len__(self) -> int:
        return self.size

    def add(self, **record) -> None:
        i = self._next
        for k, col in self.data.items():
            col[i] = record[k]
        self._next = (i + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def add_transition(self, t: DoubleAgentTransition) -> None:
        self.add(**{k: v for k, v in t._asdict().items() if k in self.data})

    def sample_indices(self, batch_size: int) -> np.ndarray:
        if self.size == 0:
            raise IndexError("cannot sample from an empty buffer")
        return self.rng.integers(0, self.size, size=batch_size)

    def sample(self, batch_size: int) -> dict:
        idx = self.sample_indices(batch_size)
        return {k: col[idx] for k, col in self.data.items()}

    def oldest_first(self) -> dict:
        """All stored rows in insertion order."""
        if self.size < self.capacity:
            order = np.arange(self.size)
        else:
            order = (np.arange(self.capacity) + self._next) % self.capacity
        return {k: col[order] for k, col in self.data.items()}


def tabular_fields(double_agent: bool) -> dict:
    f = {"s": ((), np.int64), "a": ((), np.int64), "c": ((), float), "s_next": ((), np.int64), "done": ((), bool)}
    if double_agent:
        f.update({"u": ((), np.int64), "c_p": ((), float), "x_next": ((), np.int64), "done_x": ((), bool)})
    return f


def vector_fields(obs_dim: int, action_shape: tuple, action_dtype, double_agent: bool) -> dict:
    f = {
        "s": ((obs_dim,), float),
        "a": (action_shape, action_dtype),
        "c": ((), float),
        "s_next": ((obs_dim,), float),
        "done": ((), bool),
    }
    if double_agent:
        f.update(
            {
                "u": (action_shape, action_dtype),
                "c_p": ((), float),
                "x_next": ((obs_dim,), float),
                "done_x": ((), bool),
            }
        )
    return f


def _require_settable(env) -> None:
    if not (hasattr(env, "get_state") and hasattr(env, "set_state")):
        raise CapabilityError(f"{type(env).__name__} cannot be reset to an arbitrary state")


def shared_state_step(env, obs, a, u):
    """Step the robust action ``a`` and, from the same state, the pessimistic action ``u``.

    The environment is left at the robust agent's successor.  Returns the
    transition and whether the robust branch was truncated by a time limit.
    """
    state = env.get_state()
    elapsed = getattr(env, "elapsed", None)
    s_next, c, done, truncated, _ = env.step(a)
    after, elapsed_after = env.get_state(), getattr(env, "elapsed", None)

    env.set_state(state, elapsed)
    x_next, c_x, done_x, _, _ = env.step(u)
    env.set_state(after, elapsed_after)
    return DoubleAgentTransition(obs, a, c, s_next, u, -c_x, x_next, bool(done), bool(done_x)), truncated


def double_agent_sample(
    env,
    robust_policy: Callable,
    pessimistic_policy: Callable,
    steps: int,
    buffer: ReplayBuffer,
    seed: int | None = None,
    obs=None,
):
    """Collect ``steps`` shared-state records into ``buffer``.

    The robust successor drives the trajectory; the environment is reset when
    the robust branch ends.  Returns the observation to continue from.
    """
    _require_settable(env)
    if obs is None:
        obs = env.reset(seed=seed)
    for _ in range(steps):
        t, truncated = shared_state_step(env, obs, robust_policy(obs), pessimistic_policy(obs))
        buffer.add_transition(t)
        obs = env.reset() if (t.done or truncated) else t.s_next
    return obs
