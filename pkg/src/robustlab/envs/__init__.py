from robustlab.bellman import NeighborTable
from robustlab.envs.grid import (
    ACTION_NAMES,
    ARROWS,
    GridEnv,
    GridLayout,
    cliff_adjacent_states,
    cliffwalking_env,
    frozenlake_env,
    greedy_path,
)
from robustlab.envs.perturb import (
    ActionPerturbation,
    PerturbSpec,
    apply_perturbation,
    wrap_action_perturbation,
    wrap_parameter_perturbation,
)
from robustlab.envs.physics import CartPoleEnv, PendulumEnv, PhysicsEnv, cartpole_env, pendulum_env
from robustlab.errors import ConfigError


def true_neighbor_sets(env: GridEnv) -> NeighborTable:
    """Exact ``N_s`` by enumerating every action's outcomes from every state."""
    sets = {}
    for s in range(env.n_states):
        sets[s] = {s2 for a in range(env.n_actions) for p, s2, _, _ in env.transitions(s, a) if p > 0}
    return NeighborTable.from_sets(sets, env.n_states)


ENV_BUILDERS = {
    "cliffwalking": lambda **kw: cliffwalking_env(),
    "frozenlake": lambda slippery=False, **kw: frozenlake_env(8, slippery=slippery),
    "cartpole": lambda **kw: cartpole_env(**kw),
    "pendulum": lambda **kw: pendulum_env(**kw),
}


def make_env(env_id: str, **options):
    if env_id not in ENV_BUILDERS:
        raise ConfigError(f"unknown environment {env_id!r}; choose from {sorted(ENV_BUILDERS)}")
    return ENV_BUILDERS[env_id](**options)


__all__ = [
    "ACTION_NAMES",
    "ARROWS",
    "ActionPerturbation",
    "CartPoleEnv",
    "GridEnv",
    "GridLayout",
    "PendulumEnv",
    "PerturbSpec",
    "PhysicsEnv",
    "apply_perturbation",
    "cartpole_env",
    "cliff_adjacent_states",
    "cliffwalking_env",
    "frozenlake_env",
    "greedy_path",
    "make_env",
    "pendulum_env",
    "true_neighbor_sets",
    "wrap_action_perturbation",
    "wrap_parameter_perturbation",
]
