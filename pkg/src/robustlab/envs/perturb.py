"""Test-time perturbations: random action replacement and physical parameter changes."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from robustlab.errors import ConfigError


@dataclass(frozen=True)
class PerturbSpec:
    kind: str = "action"  # "action" or "parameter"
    action_noise_prob: float = 0.0
    parameter_scales: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in ("action", "parameter"):
            raise ConfigError(f"unknown perturbation kind {self.kind!r}")
        if not 0.0 <= self.action_noise_prob <= 1.0:
            raise ConfigError(f"action_noise_prob must lie in [0, 1], got {self.action_noise_prob}")
        for k, v in self.parameter_scales.items():
            if not v > 0:
                raise ConfigError(f"scale for {k} must be > 0, got {v}")

    @property
    def level(self) -> float:
        """Scalar used as the x coordinate when sweeping."""
        if self.kind == "action":
            return self.action_noise_prob
        if len(self.parameter_scales) == 1:
            return float(next(iter(self.parameter_scales.values())))
        return float(np.prod(list(self.parameter_scales.values())))


class ActionPerturbation:
    """With probability ``p`` the agent's action is swapped for a uniform random one.

    The wrapper owns a private RNG so the inner environment's random stream is
    untouched; ``reset(seed)`` reseeds both.  ``p = 0`` never draws.
    """

    def __init__(self, env, p: float, seed: int | None = None):
        if not 0.0 <= p <= 1.0:
            raise ConfigError(f"perturbation probability must lie in [0, 1], got {p}")
        self.env = env
        self.p = p
        self._seed = seed
        self._rng = np.random.default_rng(seed)
        self.steps = 0
        self.replaced = 0

    def __getattr__(self, name):
        return getattr(self.env, name)

    def reset(self, seed: int | None = None):
        if seed is not None:
            base = 0 if self._seed is None else self._seed
            self._rng = np.random.default_rng([base, seed])
        return self.env.reset(seed=seed)

    def perturb(self, action):
        self.steps += 1
        if self.p > 0 and self._rng.random() < self.p:
            self.replaced += 1
            return self.env.sample_action(self._rng)
        return action

    def step(self, action):
        return self.env.step(self.perturb(action))


def wrap_action_perturbation(env, p: float, seed: int | None = None) -> ActionPerturbation:
    return ActionPerturbation(env, p, seed)


def wrap_parameter_perturbation(env, spec: PerturbSpec):
    """Copy of a physics env with each named parameter multiplied by its scale."""
    unknown = set(spec.parameter_scales) - set(env.params)
    if unknown:
        raise ConfigError(f"{env.name} has no parameters {sorted(unknown)}")
    scaled = {k: env.params[k] * s for k, s in spec.parameter_scales.items()}
    return env.with_params(**scaled)


def apply_perturbation(env, spec: PerturbSpec, seed: int | None = None):
    if spec.kind == "action":
        return wrap_action_perturbation(env, spec.action_noise_prob, seed)
    return wrap_parameter_perturbation(env, spec)
