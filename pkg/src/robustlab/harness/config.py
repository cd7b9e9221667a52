"""Experiment configuration files.

Grammar (INI, read with :mod:`configparser`; ``#`` and ``;`` start comments)::

    [experiment]
    env = cliffwalking              # cliffwalking | frozenlake | cartpole | pendulum
    algorithms = q_learning, arq    # labels, comma separated
    n_instances = 5
    eval_episodes = 100
    eval_max_steps = 200            # optional; physics envs default to their episode limit
    base_seed = 0                   # instance i uses base_seed + i
    seeds = 3, 7, 11                # optional explicit list, overrides base_seed/n_instances
    output_dir = runs/cliff
    workers = 1

    [env]                           # keyword options for the environment builder
    slippery = false

    [train]                         # fields of TrainConfig (tabular) or DeepConfig (deep)
    max_episodes = 500

    [algorithm.arq]                 # per-label overrides of [train]
    R = 0.2

    [algorithm.pr_ddpg_rand]        # a label may name its algorithm explicitly
    algorithm = pr_ddpg
    random_pessimist = true

    [perturbation]
    kind = action                   # action | parameter
    levels = 0, 0.05, 0.1
    parameter = length              # parameter name when kind = parameter
"""

from __future__ import annotations

import configparser
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

from robustlab.deep import DEEP_ALGORITHMS, DeepConfig
from robustlab.envs import ENV_BUILDERS
from robustlab.envs.perturb import PerturbSpec
from robustlab.errors import ConfigError
from robustlab.tabular import ALGORITHMS as TABULAR_ALGORITHMS
from robustlab.tabular import TrainConfig

GRID_ENVS = ("cliffwalking", "frozenlake")


def _parse_bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"not a boolean: {text!r}")


def _parse_list(text: str, cast=str) -> list:
    return [cast(tok.strip()) for tok in text.split(",") if tok.strip()]


def _coerce(value: str, like):
    """Parse ``value`` to the type of the default ``like``."""
    try:
        if isinstance(like, bool):
            return _parse_bool(value)
        if isinstance(like, int):
            return int(value)
        if isinstance(like, float):
            return float(value)
        if isinstance(like, tuple):
            return tuple(_parse_list(value, int))
    except ValueError as exc:
        raise ConfigError(f"cannot parse {value!r}: {exc}") from None
    return value.strip()


def _guess(value: str):
    """Env options carry no schema; try bool, int, float, then string."""
    for fn in (_parse_bool, int, float):
        try:
            return fn(value)
        except (ConfigError, ValueError):
            pass
    return value.strip()


def algorithm_family(algorithm: str) -> str:
    if algorithm in TABULAR_ALGORITHMS:
        return "tabular"
    if algorithm in DEEP_ALGORITHMS:
        return "deep"
    raise ConfigError(f"unknown algorithm {algorithm!r}; choose from {TABULAR_ALGORITHMS + DEEP_ALGORITHMS}")


@dataclass
class ExperimentConfig:
    env: str = "cliffwalking"
    env_options: dict = field(default_factory=dict)
    algorithms: list = field(default_factory=lambda: ["q_learning"])
    train: dict = field(default_factory=dict)  # overrides shared by every label
    per_algorithm: dict = field(default_factory=dict)  # label -> overrides
    perturbation_kind: str = "action"
    levels: list = field(default_factory=lambda: [0.0])
    parameter: str | None = None
    n_instances: int = 5
    eval_episodes: int = 100
    eval_max_steps: int | None = None
    base_seed: int = 0
    seeds: list | None = None
    output_dir: str = "runs/experiment"
    workers: int = 1

    def __post_init__(self):
        if self.env not in ENV_BUILDERS:
            raise ConfigError(f"unknown environment {self.env!r}; choose from {sorted(ENV_BUILDERS)}")
        if not self.algorithms:
            raise ConfigError("at least one algorithm is required")
        if self.n_instances < 1 or self.eval_episodes < 1 or self.workers < 1:
            raise ConfigError("n_instances, eval_episodes and workers must be >= 1")
        if self.perturbation_kind == "parameter" and not self.parameter:
            raise ConfigError("parameter perturbations need a parameter name")
        for label in self.algorithms:
            family = algorithm_family(self.algorithm_of(label))
            if family == "tabular" and self.env not in GRID_ENVS:
                raise ConfigError(f"{label} is tabular but {self.env} is not a grid")
            if family == "deep" and self.env in GRID_ENVS:
                raise ConfigError(f"{label} needs a physics environment, not {self.env}")
        self.perturbations()  # validates levels
        for label in self.algorithms:
            self.train_config(label, seed=0)

    def algorithm_of(self, label: str) -> str:
        return str(self.per_algorithm.get(label, {}).get("algorithm", label))

    def instance_seeds(self) -> list[int]:
        if self.seeds:
            return [int(s) for s in self.seeds]
        return [self.base_seed + i for i in range(self.n_instances)]

    def perturbations(self) -> list[PerturbSpec]:
        if self.perturbation_kind == "action":
            return [PerturbSpec("action", action_noise_prob=float(p)) for p in self.levels]
        if self.perturbation_kind == "parameter":
            return [PerturbSpec("parameter", parameter_scales={self.parameter: float(x)}) for x in self.levels]
        raise ConfigError(f"unknown perturbation kind {self.perturbation_kind!r}")

    def train_config(self, label: str, seed: int):
        """TrainConfig or DeepConfig for ``label`` with its overrides applied."""
        algorithm = self.algorithm_of(label)
        cls = TrainConfig if algorithm_family(algorithm) == "tabular" else DeepConfig
        defaults = asdict(cls())
        raw = {**self.train, **self.per_algorithm.get(label, {})}
        raw.pop("algorithm", None)
        kwargs = {}
        for k, v in raw.items():
            if k not in defaults:
                raise ConfigError(f"{cls.__name__} has no field {k!r} (label {label})")
            kwargs[k] = _coerce(v, defaults[k]) if isinstance(v, str) else v
        kwargs["seed"] = seed
        if cls is DeepConfig:
            kwargs["algorithm"] = algorithm
        return cls(**kwargs)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        names = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in d.items() if k in names})


def parse_config(text: str, source: str = "<string>") -> ExperimentConfig:
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    cp.optionxform = str  # keep field names such as R as written
    try:
        cp.read_string(text, source=source)
    except configparser.Error as exc:
        raise ConfigError(f"{source}: {exc}") from None
    if not cp.has_section("experiment"):
        raise ConfigError(f"{source}: missing [experiment] section")
    exp = cp["experiment"]
    kwargs = {}
    for key in ("n_instances", "eval_episodes", "eval_max_steps", "base_seed", "workers"):
        if key in exp:
            kwargs[key] = _coerce(exp[key], 0)
    for key in ("env", "output_dir"):
        if key in exp:
            kwargs[key] = exp[key].strip()
    if "algorithms" in exp:
        kwargs["algorithms"] = _parse_list(exp["algorithms"])
    if "seeds" in exp and exp["seeds"].strip():
        kwargs["seeds"] = _parse_list(exp["seeds"], int)
    known = {"n_instances", "eval_episodes", "eval_max_steps", "base_seed", "workers", "env", "output_dir", "algorithms", "seeds"}
    unknown = set(exp) - known
    if unknown:
        raise ConfigError(f"{source}: unknown keys in [experiment]: {sorted(unknown)}")
    if cp.has_section("env"):
        kwargs["env_options"] = {k: _guess(v) for k, v in cp["env"].items()}
    if cp.has_section("train"):
        kwargs["train"] = dict(cp["train"])
    per = {}
    for name in cp.sections():
        if name.startswith("algorithm."):
            per[name.split(".", 1)[1]] = dict(cp[name])
        elif name not in ("experiment", "env", "train", "perturbation"):
            raise ConfigError(f"{source}: unknown section [{name}]")
    kwargs["per_algorithm"] = per
    if cp.has_section("perturbation"):
        pert = cp["perturbation"]
        kwargs["perturbation_kind"] = pert.get("kind", "action").strip()
        if "levels" in pert:
            try:
                kwargs["levels"] = _parse_list(pert["levels"], float)
            except ValueError as exc:
                raise ConfigError(f"{source}: bad perturbation levels: {exc}") from None
        if "parameter" in pert:
            kwargs["parameter"] = pert["parameter"].strip()
    try:
        return ExperimentConfig(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{source}: {exc}") from None


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file {path} not found")
    return parse_config(path.read_text(), source=str(path))


def dumps_config(config: ExperimentConfig) -> str:
    """Inverse of :func:`parse_config` (up to comments and key order)."""
    lines = ["[experiment]", f"env = {config.env}", f"algorithms = {', '.join(config.algorithms)}"]
    lines += [f"n_instances = {config.n_instances}", f"eval_episodes = {config.eval_episodes}"]
    if config.eval_max_steps is not None:
        lines.append(f"eval_max_steps = {config.eval_max_steps}")
    lines += [f"base_seed = {config.base_seed}", f"output_dir = {config.output_dir}", f"workers = {config.workers}"]
    if config.seeds:
        lines.append(f"seeds = {', '.join(str(s) for s in config.seeds)}")
    if config.env_options:
        lines += ["", "[env]"] + [f"{k} = {v}" for k, v in config.env_options.items()]
    if config.train:
        lines += ["", "[train]"] + [f"{k} = {_fmt(v)}" for k, v in config.train.items()]
    for label, opts in config.per_algorithm.items():
        lines += ["", f"[algorithm.{label}]"] + [f"{k} = {_fmt(v)}" for k, v in opts.items()]
    lines += ["", "[perturbation]", f"kind = {config.perturbation_kind}"]
    lines.append(f"levels = {', '.join(repr(float(x)) for x in config.levels)}")
    if config.parameter:
        lines.append(f"parameter = {config.parameter}")
    return "\n".join(lines) + "\n"


def _fmt(v) -> str:
    if isinstance(v, (tuple, list)):
        return ", ".join(str(x) for x in v)
    return str(v)
