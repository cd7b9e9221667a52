"""Classic-control tasks: CartPole (discrete) and a torque-limited pendulum (continuous)."""

from __future__ import annotations

import logging
import math

import numpy as np

from robustlab.errors import ConfigError

log = logging.getLogger(__name__)


class PhysicsEnv:
    """Base class: ``params`` holds the physical constants, all strictly positive."""

    name = "physics"
    discrete = False
    max_episode_steps = 200

    def __init__(self, **params):
        self.params = dict(self.default_params())
        unknown = set(params) - set(self.params)
        if unknown:
            raise ConfigError(f"unknown parameters for {self.name}: {sorted(unknown)}")
        self.params.update(params)
        for k, v in self.params.items():
            if not v > 0:
                raise ConfigError(f"parameter {k} must be > 0, got {v}")
        self._rng = np.random.default_rng()
        self.state = np.zeros(self.state_dim)
        self.elapsed = 0

    @classmethod
    def default_params(cls) -> dict:
        raise NotImplementedError

    def with_params(self, **scaled) -> "PhysicsEnv":
        return type(self)(**{**self.params, **scaled})

    def reset(self, seed: int | None = None) -> np.ndarray:
        if seed is not None:
            self._rng = np.random.default_rng(seed)
        self.state = self._initial_state()
        self.elapsed = 0
        return self.observe()

    def step(self, action):
        cost, terminated = self._advance(action)
        self.elapsed += 1
        truncated = not terminated and self.elapsed >= self.max_episode_steps
        return self.observe(), cost, terminated, truncated, {}

    def get_state(self) -> np.ndarray:
        return self.state.copy()

    def set_state(self, state, elapsed: int | None = None) -> None:
        self.state = np.array(state, dtype=float)
        if elapsed is not None:
            self.elapsed = elapsed


class CartPoleEnv(PhysicsEnv):
    """Cart-pole balancing with Euler integration; cost -1 per surviving step."""

    name = "cartpole"
    discrete = True
    n_actions = 2
    state_dim = 4
    obs_dim = 4
    max_episode_steps = 500
    x_threshold = 2.4
    theta_threshold = 12 * 2 * math.pi / 360

    @classmethod
    def default_params(cls):
        return {
            "gravity": 9.8,
            "masscart": 1.0,
            "masspole": 0.1,
            "length": 0.5,  # half the pole length
            "force_mag": 10.0,
            "tau": 0.02,
        }

    def accelerations(self, state, action):
        """Return ``(xacc, thetaacc)`` for the given state and action."""
        p = self.params
        _, _, theta, theta_dot = state
        force = p["force_mag"] if action == 1 else -p["force_mag"]
        total_mass = p["masspole"] + p["masscart"]
        polemass_length = p["masspole"] * p["length"]
        cos, sin = math.cos(theta), math.sin(theta)
        temp = (force + polemass_length * theta_dot**2 * sin) / total_mass
        thetaacc = (p["gravity"] * sin - cos * temp) / (
            p["length"] * (4.0 / 3.0 - p["masspole"] * cos**2 / total_mass)
        )
        xacc = temp - polemass_length * thetaacc * cos / total_mass
        return xacc, thetaacc

    def next_state(self, state, action) -> np.ndarray:
        x, x_dot, theta, theta_dot = state
        xacc, thetaacc = self.accelerations(state, action)
        tau = self.params["tau"]
        return np.array(
            [
                x + tau * x_dot,
                x_dot + tau * xacc,
                theta + tau * theta_dot,
                theta_dot + tau * thetaacc,
            ]
        )

    def failed(self, state) -> bool:
        return abs(state[0]) > self.x_threshold or abs(state[2]) > self.theta_threshold

    def _initial_state(self):
        return self._rng.uniform(-0.05, 0.05, size=4)

    def _advance(self, action):
        self.state = self.next_state(self.state, int(action))
        return -1.0, self.failed(self.state)

    def observe(self):
        return self.state.copy()

    def state_from_obs(self, obs):
        return np.array(obs, dtype=float)

    def sample_action(self, rng):
        return int(rng.integers(2))


def angle_normalize(x):
    return ((x + math.pi) % (2 * math.pi)) - math.pi


class PendulumEnv(PhysicsEnv):
    """Swing-up pendulum.  Observation ``(cos th, sin th, th_dot)``, torque in [-2, 2].

    Cost per step ``th^2 + 0.1 th_dot^2 + 0.001 u^2`` with ``th`` wrapped to
    ``[-pi, pi]``; episodes last 200 steps and never terminate early.
    """

    name = "pendulum"
    state_dim = 2
    obs_dim = 3
    action_dim = 1
    max_speed = 8.0
    max_episode_steps = 200

    @classmethod
    def default_params(cls):
        return {"gravity": 10.0, "mass": 1.0, "length": 1.0, "dt": 0.05, "max_torque": 2.0}

    @property
    def action_low(self):
        return -self.params["max_torque"]

    @property
    def action_high(self):
        return self.params["max_torque"]

    @staticmethod
    def step_cost(th, th_dot, u):
        return angle_normalize(th) ** 2 + 0.1 * th_dot**2 + 0.001 * u**2

    def clamp(self, action) -> float:
        u = float(np.asarray(action).reshape(-1)[0])
        hi = self.params["max_torque"]
        if not -hi <= u <= hi:
            log.debug("pendulum torque %.4g clamped to +-%.4g", u, hi)
            u = min(max(u, -hi), hi)
        return u

    def next_state(self, state, u) -> np.ndarray:
        p = self.params
        th, th_dot = state
        new_th_dot = th_dot + (
            3 * p["gravity"] / (2 * p["length"]) * math.sin(th) + 3.0 / (p["mass"] * p["length"] ** 2) * u
        ) * p["dt"]
        new_th_dot = min(max(new_th_dot, -self.max_speed), self.max_speed)
        return np.array([th + new_th_dot * p["dt"], new_th_dot])

    def _initial_state(self):
        return np.array([self._rng.uniform(-math.pi, math.pi), self._rng.uniform(-1.0, 1.0)])

    def _advance(self, action):
        u = self.clamp(action)
        cost = self.step_cost(self.state[0], self.state[1], u)
        self.state = self.next_state(self.state, u)
        return float(cost), False

    def observe(self):
        th, th_dot = self.state
        return np.array([math.cos(th), math.sin(th), th_dot])

    def state_from_obs(self, obs):
        return np.array([math.atan2(obs[1], obs[0]), obs[2]])

    def sample_action(self, rng):
        hi = self.params["max_torque"]
        return np.array([rng.uniform(-hi, hi)])


def cartpole_env(**params) -> CartPoleEnv:
    return CartPoleEnv(**params)


def pendulum_env(**params) -> PendulumEnv:
    return PendulumEnv(**params)
