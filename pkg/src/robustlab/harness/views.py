"""Text views of finished runs: greedy-action grids, max-state grids and runtime tables."""

from __future__ import annotations

import math
import warnings
from pathlib import Path

import numpy as np

from robustlab.bellman import NeighborTable, argmax_neighbor
from robustlab.envs import ARROWS, GridEnv, make_env
from robustlab.errors import CapabilityError, ConfigError
from robustlab.harness.config import algorithm_family
from robustlab.harness.runner import config_of_run, load_tabular, read_manifest

# base algorithm each variant is timed against
RUNTIME_BASES = {
    "robust_q": "q_learning",
    "arq": "q_learning",
    "prq": "q_learning",
    "r_dqn": "dqn",
    "pr_dqn": "dqn",
    "r_ddpg": "ddpg",
    "pr_ddpg": "ddpg",
}


def policy_grid(env: GridEnv, q: np.ndarray) -> str:
    """One arrow per cell for ``argmin_a Q`` (lowest action index on ties)."""
    actions = np.argmin(q, axis=1)
    return env.render_ascii([ARROWS[a] for a in actions])


def _direction(env: GridEnv, s: int, target: int) -> str:
    if target == s:
        return "o"
    r, c = env.to_cell(s)
    r2, c2 = env.to_cell(target)
    for a, (dr, dc) in enumerate(((0, -1), (1, 0), (0, 1), (-1, 0))):
        if (r + dr, c + dc) == (r2, c2):
            return ARROWS[a]
    return "*"  # a non-adjacent neighbour, e.g. the start cell reached through the cliff


def max_state_grid(env: GridEnv, q: np.ndarray, neighbors: NeighborTable) -> str:
    """Per visited cell, the direction of ``argmax over N_s of V``.

    ``o`` marks the state itself, ``*`` a non-adjacent neighbour and ``.`` an
    unvisited cell.
    """
    v = q.min(axis=1)
    symbols = {}
    for s in range(env.n_states):
        if neighbors.recorded(s) and not env.is_terminal(s):
            symbols[s] = _direction(env, s, argmax_neighbor(v, neighbors, s))
    return env.render_ascii(symbols)


def show_policy(run_dir, label: str | None = None, seed: int | None = None, max_states: bool = False) -> str:
    config = config_of_run(run_dir)
    label = label or config.algorithms[0]
    if label not in config.algorithms:
        raise ConfigError(f"{label!r} is not part of this run; choose from {config.algorithms}")
    if algorithm_family(config.algorithm_of(label)) != "tabular":
        raise CapabilityError(f"{label} is not a tabular algorithm; no policy grid to show")
    seed = config.instance_seeds()[0] if seed is None else seed
    env = make_env(config.env, **config.env_options)
    q, neighbors, _ = load_tabular(run_dir, label, seed)
    head = f"{label} seed {seed} on {config.env}"
    if max_states:
        return f"{head}: max-state directions\n{max_state_grid(env, q, neighbors)}"
    return f"{head}: greedy actions\n{policy_grid(env, q)}"


def compare_runtime(run_dirs) -> list[dict]:
    """Mean training seconds per (algorithm, env) and the ratio to the base algorithm."""
    times = {}
    for d in run_dirs:
        try:
            manifest = read_manifest(d)
        except ConfigError:
            warnings.warn(f"skipping {d}: no manifest", stacklevel=2)
            continue
        env = manifest["config"]["env"]
        for inst in manifest["instances"]:
            if inst["status"] == "ok" and math.isfinite(inst["runtime"]):
                times.setdefault((inst["label"], inst["algorithm"], env), []).append(inst["runtime"])
    by_algo = {}
    for (label, algo, env), ts in times.items():
        if label == algo:
            by_algo[(algo, env)] = float(np.mean(ts))
    rows = []
    for (label, algo, env), ts in sorted(times.items()):
        mean = float(np.mean(ts))
        base = by_algo.get((RUNTIME_BASES.get(algo, ""), env))
        rows.append(
            {
                "algorithm": label,
                "env": env,
                "n": len(ts),
                "runtime_mean": mean,
                "runtime_std": float(np.std(ts)),
                "ratio_to_base": mean / base if base else float("nan"),
            }
        )
    return rows


def format_runtime_table(rows: list[dict]) -> str:
    lines = [f"{'algorithm':<16}{'env':<14}{'n':>3}{'seconds':>12}{'std':>10}{'vs base':>10}"]
    for r in rows:
        ratio = "-" if math.isnan(r["ratio_to_base"]) else f"{r['ratio_to_base']:.2f}x"
        lines.append(
            f"{r['algorithm']:<16}{r['env']:<14}{r['n']:>3}{r['runtime_mean']:>12.2f}{r['runtime_std']:>10.2f}{ratio:>10}"
        )
    return "\n".join(lines)


def run_dirs_from(paths) -> list[Path]:
    return [Path(p) for p in paths]
