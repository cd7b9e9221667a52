"""Contamination uncertainty sets, their support functions and robust value iteration.

For a nominal row ``p`` and value vector ``v`` the three sets handled here have
closed-form support functions::

    nominal                    p.v
    r_contamination            (1 - R) p.v + R max_{s'} v(s')
    adjacent_r_contamination   (1 - R) p.v + R max_{s' in N_s} v(s')

where ``N_s`` is the set of states reachable from ``s`` in one nominal step.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, NamedTuple

import numpy as np

from robustlab.errors import ConfigError, ContractError
from robustlab.mdp import TabularMdp

KINDS = ("nominal", "r_contamination", "adjacent_r_contamination")
_ALIASES = {"rc": "r_contamination", "adjacent": "adjacent_r_contamination", "adj": "adjacent_r_contamination"}


@dataclass(frozen=True)
class UncertaintySetSpec:
    kind: str = "adjacent_r_contamination"
    R: float = 0.0

    def __post_init__(self):
        kind = _ALIASES.get(self.kind, self.kind)
        if kind not in KINDS:
            raise ConfigError(f"unknown uncertainty set kind {self.kind!r}")
        if not 0.0 <= self.R <= 1.0:
            raise ConfigError(f"robustness level R must lie in [0, 1], got {self.R}")
        object.__setattr__(self, "kind", kind)

    @property
    def level(self) -> float:
        return 0.0 if self.kind == "nominal" else self.R


class NeighborTable:
    """Per-state successor sets.

    Built either exactly from a kernel or incrementally from observed
    transitions.  With ``include_self`` a state is inserted into its own set
    the first time a transition out of it is recorded.  Lookups of states with
    no recorded set fall back to ``{s}`` so that no set is ever empty.
    """

    def __init__(self, n_states: int, include_self: bool = True):
        self.n_states = n_states
        self.include_self = include_self
        self._sets: dict[int, set[int]] = {}
        self._arrays: dict[int, np.ndarray] = {}

    @classmethod
    def from_sets(cls, sets, n_states: int | None = None) -> "NeighborTable":
        sets = dict(sets) if not isinstance(sets, dict) else sets
        n = n_states if n_states is not None else len(sets)
        table = cls(n, include_self=False)
        for s, succ in sets.items():
            for s2 in succ:
                table.add(s, s2)
        return table

    def add(self, s: int, s_next: int) -> None:
        s, s_next = int(s), int(s_next)
        if not (0 <= s < self.n_states and 0 <= s_next < self.n_states):
            raise IndexError(f"transition ({s}, {s_next}) out of range")
        entry = self._sets.get(s)
        if entry is None:
            entry = self._sets[s] = {s} if self.include_self else set()
            self._arrays.pop(s, None)
        if s_next not in entry:
            entry.add(s_next)
            self._arrays.pop(s, None)

    def get(self, s: int) -> np.ndarray:
        """Sorted neighbour indices of ``s`` (``[s]`` if nothing is recorded)."""
        arr = self._arrays.get(s)
        if arr is None:
            entry = self._sets.get(s)
            arr = np.array(sorted(entry) if entry else [s], dtype=int)
            self._arrays[s] = arr
        return arr

    def __getitem__(self, s: int) -> frozenset:
        return frozenset(int(x) for x in self.get(s))

    def recorded(self, s: int) -> bool:
        return s in self._sets

    @property
    def visited(self) -> list[int]:
        return sorted(self._sets)

    def copy(self) -> "NeighborTable":
        other = NeighborTable(self.n_states, self.include_self)
        other._sets = {s: set(v) for s, v in self._sets.items()}
        return other

    def as_lists(self) -> dict[int, list[int]]:
        return {s: sorted(v) for s, v in sorted(self._sets.items())}

    def __eq__(self, other) -> bool:
        return isinstance(other, NeighborTable) and self.as_lists() == other.as_lists()


def kernel_neighbor_sets(mdp: TabularMdp) -> NeighborTable:
    """``N_s = {s' : sum_a p(s'|s, a) > 0}`` for every state."""
    reach = mdp.kernel.sum(axis=1) > 0
    return NeighborTable.from_sets({s: np.nonzero(reach[s])[0] for s in range(mdp.n_states)}, mdp.n_states)


def support_function(spec: UncertaintySetSpec, p_row, v, neighbors_of_s=None) -> float:
    """``max_{k in P_s^a} k.v`` in closed form."""
    p_row = np.asarray(p_row, dtype=float)
    v = np.asarray(v, dtype=float)
    nominal = float(p_row @ v)
    if spec.kind == "nominal":
        return nominal
    R = spec.R
    if spec.kind == "r_contamination":
        worst = float(v.max())
    else:
        if neighbors_of_s is None or len(neighbors_of_s) == 0:
            raise ContractError("adjacent support function needs a non-empty neighbour set")
        worst = float(v[np.asarray(list(neighbors_of_s), dtype=int)].max())
    return (1 - R) * nominal + R * worst


def lp_support_oracle(spec: UncertaintySetSpec, p_row, v, neighbors_of_s=None, max_states: int = 12) -> float:
    """Maximise ``k.v`` over the kernel set by enumerating its vertices.

    The set ``{(1-R) p + R q : q in simplex restricted to N}`` is a polytope
    whose vertices are ``(1-R) p + R e_j`` for ``j in N``.  Each candidate is
    built as a full distribution, checked for feasibility and evaluated.
    """
    p_row = np.asarray(p_row, dtype=float)
    v = np.asarray(v, dtype=float)
    n = len(v)
    if n > max_states:
        raise ContractError(f"oracle limited to {max_states} states, got {n}")
    if spec.kind == "nominal":
        allowed = []
    elif spec.kind == "r_contamination":
        allowed = list(range(n))
    else:
        allowed = sorted(set(int(j) for j in (neighbors_of_s or [])))
        if not allowed:
            raise ContractError("adjacent set needs a non-empty neighbour set")
    R = spec.level
    if not allowed:
        return float(np.dot(p_row, v))
    best = -np.inf
    for j in allowed:
        q = np.zeros(n)
        q[j] = 1.0
        k = (1 - R) * p_row + R * q
        outside = [i for i in range(n) if i not in allowed]
        assert np.all(k >= -1e-15) and abs(k.sum() - 1.0) < 1e-9
        assert np.all(q[outside] == 0.0)
        best = max(best, float(np.dot(k, v)))
    return best


def _worst_values(spec: UncertaintySetSpec, v: np.ndarray, neighbors: NeighborTable | None) -> np.ndarray:
    """Per-state maximum of ``v`` over the set the adversary may move to."""
    n = len(v)
    if spec.kind == "nominal":
        return np.zeros(n)
    if spec.kind == "r_contamination":
        return np.full(n, v.max())
    if neighbors is None:
        raise ContractError("adjacent backup needs a neighbour table")
    return np.array([v[neighbors.get(s)].max() for s in range(n)])


def robust_backup(
    mdp: TabularMdp,
    spec: UncertaintySetSpec,
    neighbors: NeighborTable | None,
    q: np.ndarray,
) -> np.ndarray:
    """One synchronous sweep of ``(TQ)(s,a) = c(s,a) + gamma * sigma(V)``."""
    v = q.min(axis=1)
    nominal = mdp.kernel @ v
    R = spec.level
    worst = _worst_values(spec, v, neighbors)
    return mdp.cost + mdp.gamma * ((1 - R) * nominal + R * worst[:, None])


class ViResult(NamedTuple):
    q: np.ndarray
    iterations: int
    residual: float
    converged: bool
    residuals: list


def robust_value_iteration(
    mdp: TabularMdp,
    spec: UncertaintySetSpec,
    neighbors: NeighborTable | None = None,
    tol: float = 1e-8,
    max_iters: int = 100_000,
    q0: np.ndarray | None = None,
) -> ViResult:
    """Iterate :func:`robust_backup` until the sup-norm step falls below ``tol``."""
    if not tol > 0:
        raise ConfigError("tol must be positive")
    q = np.zeros((mdp.n_states, mdp.n_actions)) if q0 is None else np.array(q0, dtype=float)
    residuals = []
    for it in range(1, max_iters + 1):
        q_next = robust_backup(mdp, spec, neighbors, q)
        res = float(np.abs(q_next - q).max())
        residuals.append(res)
        q = q_next
        if res < tol:
            return ViResult(q, it, res, True, residuals)
    return ViResult(q, max_iters, residuals[-1] if residuals else np.inf, False, residuals)


def estimate_neighbors(
    transitions: Iterable[tuple[int, int]],
    n_states: int,
    include_self: bool = True,
    table: NeighborTable | None = None,
) -> NeighborTable:
    """Union of observed successors per state (optionally extending ``table``)."""
    table = NeighborTable(n_states, include_self) if table is None else table
    for s, s2 in transitions:
        table.add(s, s2)
    return table


def argmax_neighbor(v: np.ndarray, neighbors: NeighborTable, s: int) -> int:
    """``argmax_{s' in N_s} v(s')`` with the lowest state index winning ties."""
    idx = neighbors.get(s)
    return int(idx[np.argmax(v[idx])])


@dataclass
class Assumption2Report:
    holds: np.ndarray
    maximizers: np.ndarray
    failing: list = field(default_factory=list)

    @property
    def all_hold(self) -> bool:
        return bool(self.holds.all())


def check_assumption2(
    neighbors_hat: NeighborTable,
    neighbors_true: NeighborTable,
    v_star: np.ndarray,
    states: Iterable[int] | None = None,
) -> Assumption2Report:
    """For each state check ``argmax_{N_s} V*(s') in N_hat_s``."""
    v_star = np.asarray(v_star, dtype=float)
    states = range(len(v_star)) if states is None else list(states)
    holds, maxers = [], []
    for s in states:
        m = argmax_neighbor(v_star, neighbors_true, s)
        maxers.append(m)
        holds.append(m in neighbors_hat[s])
    holds = np.array(holds, dtype=bool)
    failing = [s for s, ok in zip(states, holds) if not ok]
    return Assumption2Report(holds, np.array(maxers, dtype=int), failing)
