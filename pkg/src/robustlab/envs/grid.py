"""Gridworlds: CliffWalking (4x12) and FrozenLake (8x8).

Action order is shared by both grids: 0=left, 1=down, 2=right, 3=up.
States are ``row * cols + col``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from robustlab.errors import ConfigError
from robustlab.mdp import TabularMdp

LEFT, DOWN, RIGHT, UP = range(4)
ACTION_NAMES = ("left", "down", "right", "up")
ARROWS = ("<", "v", ">", "^")
_MOVES = {LEFT: (0, -1), DOWN: (1, 0), RIGHT: (0, 1), UP: (-1, 0)}

FROZENLAKE_8X8 = (
    "SFFFFFFF",
    "FFFFFFFF",
    "FFFHFFFF",
    "FFFFFHFF",
    "FFFHFFFF",
    "FHHFFFHF",
    "FHFFHFHF",
    "FFFHFFFG",
)


@dataclass(frozen=True)
class GridLayout:
    rows: int
    cols: int
    start: tuple[int, int]
    goal: tuple[int, int]
    hazards: frozenset
    # cliff-style hazards send the agent back to start; hole-style ones end the episode
    hazard_terminal: bool
    slippery: bool
    step_cost: float
    hazard_cost: float
    goal_cost: float

    def __post_init__(self):
        for name, (r, c) in (("start", self.start), ("goal", self.goal)):
            if not (0 <= r < self.rows and 0 <= c < self.cols):
                raise ConfigError(f"{name} {(r, c)} outside the {self.rows}x{self.cols} grid")
        if self.start in self.hazards:
            raise ConfigError("start cell cannot be a hazard")
        if self.step_cost < 0:
            raise ConfigError("step_cost must be >= 0")
        if self.hazard_terminal:
            # a terminal hazard costs nothing extra; losing the goal is the penalty
            if self.hazard_cost < self.step_cost:
                raise ConfigError("hazard_cost must be >= step_cost")
        elif not self.hazard_cost > self.step_cost:
            raise ConfigError("hazard_cost must exceed step_cost")


class GridEnv:
    """Tabular gridworld with a gym-like ``reset``/``step`` interface returning costs."""

    n_actions = 4
    discrete = True

    def __init__(self, layout: GridLayout, name: str = "grid"):
        self.layout = layout
        self.name = name
        self.n_states = layout.rows * layout.cols
        self.start_state = self.to_state(layout.start)
        self.goal_state = self.to_state(layout.goal)
        self.hazard_states = frozenset(self.to_state(c) for c in layout.hazards)
        self._transitions = [[self._enumerate(s, a) for a in range(4)] for s in range(self.n_states)]
        self._rng = np.random.default_rng()
        self.state = self.start_state
        self.done = False

    # -- geometry ---------------------------------------------------------
    def to_state(self, cell) -> int:
        return cell[0] * self.layout.cols + cell[1]

    def to_cell(self, s: int) -> tuple[int, int]:
        return divmod(int(s), self.layout.cols)

    def is_terminal(self, s: int) -> bool:
        if s == self.goal_state:
            return True
        return self.layout.hazard_terminal and s in self.hazard_states

    def _move(self, s: int, a: int) -> int:
        r, c = self.to_cell(s)
        dr, dc = _MOVES[a]
        r = min(max(r + dr, 0), self.layout.rows - 1)
        c = min(max(c + dc, 0), self.layout.cols - 1)
        return self.to_state((r, c))

    def _outcome(self, s: int, a: int):
        lay = self.layout
        s2 = self._move(s, a)
        if s2 in self.hazard_states:
            if lay.hazard_terminal:
                return s2, lay.hazard_cost, True
            return self.start_state, lay.hazard_cost, False
        if s2 == self.goal_state:
            return s2, lay.goal_cost, True
        return s2, lay.step_cost, False

    def _enumerate(self, s: int, a: int):
        """List of ``(prob, next_state, cost, terminal)`` like gym's ``P[s][a]``."""
        if self.is_terminal(s):
            return [(1.0, s, 0.0, True)]
        if self.layout.slippery:
            dirs = [(a - 1) % 4, a, (a + 1) % 4]
            out = {}
            for b in dirs:
                s2, cost, term = self._outcome(s, b)
                key = (s2, cost, term)
                out[key] = out.get(key, 0.0) + 1.0 / 3.0
            return [(p, s2, cost, term) for (s2, cost, term), p in out.items()]
        s2, cost, term = self._outcome(s, a)
        return [(1.0, s2, cost, term)]

    def transitions(self, s: int, a: int):
        return self._transitions[s][a]

    def to_mdp(self, gamma: float) -> TabularMdp:
        """Nominal kernel; terminal states become zero-cost absorbing states."""
        n = self.n_states
        kernel = np.zeros((n, 4, n))
        cost = np.zeros((n, 4))
        for s in range(n):
            for a in range(4):
                for p, s2, c, _ in self._transitions[s][a]:
                    kernel[s, a, s2] += p
                    cost[s, a] += p * c
        return TabularMdp(kernel=kernel, cost=cost, gamma=gamma)

    # -- episode interface --------------------------------------------------
    def reset(self, seed: int | None = None) -> int:
        if seed is not None:
            self._rng = np.random.default_rng(seed)
        self.state = self.start_state
        self.done = False
        return self.state

    def step(self, action: int):
        outcomes = self._transitions[self.state][int(action)]
        if len(outcomes) == 1:
            _, s2, cost, term = outcomes[0]
        else:
            probs = [o[0] for o in outcomes]
            _, s2, cost, term = outcomes[self._rng.choice(len(outcomes), p=probs)]
        self.state = s2
        self.done = term
        return s2, float(cost), term, False, {}

    def get_state(self) -> int:
        return self.state

    def set_state(self, s: int, elapsed=None) -> None:
        self.state = int(s)
        self.done = self.is_terminal(self.state)

    def sample_action(self, rng: np.random.Generator) -> int:
        return int(rng.integers(4))

    # -- display --------------------------------------------------------------
    def cell_symbol(self, s: int) -> str | None:
        if s == self.start_state:
            return "S"
        if s == self.goal_state:
            return "G"
        if s in self.hazard_states:
            return "C" if not self.layout.hazard_terminal else "H"
        return None

    def render_ascii(self, symbols) -> str:
        """Grid of per-state symbols; start/goal/hazard cells keep their letters
        unless ``symbols`` gives them something explicitly."""
        lines = []
        for r in range(self.layout.rows):
            row = []
            for c in range(self.layout.cols):
                s = self.to_state((r, c))
                fixed = self.cell_symbol(s)
                sym = symbols.get(s) if isinstance(symbols, dict) else symbols[s]
                if fixed in ("G", "C", "H") or sym is None:
                    sym = fixed or "."
                row.append(sym)
            lines.append(" ".join(row))
        return "\n".join(lines)


def cliffwalking_env() -> GridEnv:
    """4x12 CliffWalking: cost 1 per step, 100 for the cliff (back to start)."""
    layout = GridLayout(
        rows=4,
        cols=12,
        start=(3, 0),
        goal=(3, 11),
        hazards=frozenset((3, c) for c in range(1, 11)),
        hazard_terminal=False,
        slippery=False,
        step_cost=1.0,
        hazard_cost=100.0,
        goal_cost=1.0,
    )
    return GridEnv(layout, name="cliffwalking")


def frozenlake_env(size: int = 8, slippery: bool = False) -> GridEnv:
    """8x8 FrozenLake; goal pays reward 1 (cost -1), holes end the episode."""
    if size != 8:
        raise ConfigError(f"only the 8x8 FrozenLake map is supported, got size={size}")
    holes, start, goal = set(), None, None
    for r, line in enumerate(FROZENLAKE_8X8):
        for c, ch in enumerate(line):
            if ch == "H":
                holes.add((r, c))
            elif ch == "S":
                start = (r, c)
            elif ch == "G":
                goal = (r, c)
    layout = GridLayout(
        rows=8,
        cols=8,
        start=start,
        goal=goal,
        hazards=frozenset(holes),
        hazard_terminal=True,
        slippery=slippery,
        step_cost=0.0,
        hazard_cost=0.0,
        goal_cost=-1.0,
    )
    return GridEnv(layout, name="frozenlake" + ("-slippery" if slippery else ""))


def cliff_adjacent_states(env: GridEnv) -> set[int]:
    """Non-hazard cells orthogonally adjacent to a hazard, excluding start and goal."""
    out = set()
    for h in env.hazard_states:
        for a in range(4):
            s = env._move(h, a)
            if s not in env.hazard_states and s not in (env.start_state, env.goal_state):
                out.add(s)
    return out


def greedy_path(env: GridEnv, actions, max_steps: int = 100) -> tuple[list[int], bool]:
    """Follow ``actions`` (one per state) through the nominal most likely moves.

    Returns the visited states (including start) and whether the goal was reached.
    """
    s = env.start_state
    path = [s]
    for _ in range(max_steps):
        outcomes = env.transitions(s, int(actions[s]))
        _, s, _, term = max(outcomes, key=lambda o: o[0])
        path.append(s)
        if term:
            return path, s == env.goal_state
    return path, False
