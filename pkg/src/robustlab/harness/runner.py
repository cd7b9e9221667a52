"""Multi-seed training, perturbed evaluation and aggregation.

Run directory layout::

    <run>/config.ini
    <run>/manifest.json
    <run>/aggregate.csv
    <run>/<label>/seed_<k>/{q.npy, q_phi.npy, neighbors.json, train_log.json}   tabular
    <run>/<label>/seed_<k>/{nets/*.npz, train_log.csv}                          deep
    <run>/<label>/seed_<k>/eval_<kind>_<level>.json                             one EvalReport each
"""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

import robustlab
from robustlab.bellman import NeighborTable
from robustlab.deep import DeepConfig, train_deep, write_log_csv
from robustlab.envs import apply_perturbation, make_env
from robustlab.errors import CapabilityError, ConfigError, DivergenceError
from robustlab.harness.config import ExperimentConfig, algorithm_family, dumps_config, load_config
from robustlab.mdp import EvalReport, evaluate_policy, greedy_policy
from robustlab.neural import forward, load_net
from robustlab.tabular import train_tabular

log = logging.getLogger(__name__)

AGGREGATE_VERSION = "robustlab-aggregate v1"
AGGREGATE_COLUMNS = ("algorithm", "kind", "level", "n_instances", "mean_return", "std_return")
EVAL_SEED_OFFSET = 1_000_000


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def code_hash() -> str:
    """Content hash over the package sources, stable across checkouts."""
    root = Path(robustlab.__file__).parent
    h = hashlib.sha256()
    for p in sorted(root.rglob("*.py")):
        h.update(p.relative_to(root).as_posix().encode())
        h.update(b"\0")
        h.update(p.read_bytes())
    return h.hexdigest()


def instance_dir(run_dir, label: str, seed: int) -> Path:
    return Path(run_dir) / label / f"seed_{seed}"


def level_tag(kind: str, level: float) -> str:
    return f"{kind}_{float(level):g}"


# -- training -------------------------------------------------------------------------


def _train_one(config: ExperimentConfig, run_dir: str, label: str, seed: int) -> dict:
    out = instance_dir(run_dir, label, seed)
    out.mkdir(parents=True, exist_ok=True)
    env = make_env(config.env, **config.env_options)
    tc = config.train_config(label, seed)
    record = {"label": label, "algorithm": config.algorithm_of(label), "seed": seed, "status": "ok"}
    try:
        if isinstance(tc, DeepConfig):
            res = train_deep(env, tc)
            res.agent.save(out / "nets")
            write_log_csv(out / "train_log.csv", res.log)
        else:
            res = train_tabular(env, config.algorithm_of(label), tc)
            np.save(out / "q.npy", res.q)
            if res.q_phi is not None:
                np.save(out / "q_phi.npy", res.q_phi)
            (out / "neighbors.json").write_text(json.dumps({str(k): v for k, v in res.neighbors.as_lists().items()}))
            (out / "train_log.json").write_text(json.dumps(res.log))
        record["runtime"] = res.runtime
    except DivergenceError as exc:
        log.warning("instance %s seed %d failed: %s", label, seed, exc)
        record.update(status="failed", error=str(exc), runtime=float("nan"))
    return record


def load_policy(config: ExperimentConfig, run_dir, label: str, seed: int):
    """Greedy policy of a trained instance, rebuilt from its stored artifacts."""
    d = instance_dir(run_dir, label, seed)
    algorithm = config.algorithm_of(label)
    if algorithm_family(algorithm) == "tabular":
        return greedy_policy(np.load(d / "q.npy"))
    if algorithm.endswith("dqn"):
        q = load_net(d / "nets" / "q_pi.npz")
        return lambda obs: int(np.argmin(forward(q, obs)[0]))
    actor = load_net(d / "nets" / "actor_pi.npz")
    return lambda obs: forward(actor, obs)[0].copy()


def load_tabular(run_dir, label: str, seed: int):
    """``(q, neighbors, q_phi or None)`` of a tabular instance."""
    d = instance_dir(run_dir, label, seed)
    if not (d / "q.npy").exists():
        raise CapabilityError(f"{label} seed {seed} has no Q-table; it is not a tabular run")
    q = np.load(d / "q.npy")
    raw = json.loads((d / "neighbors.json").read_text())
    neighbors = NeighborTable.from_sets({int(k): v for k, v in raw.items()}, q.shape[0])
    q_phi = np.load(d / "q_phi.npy") if (d / "q_phi.npy").exists() else None
    return q, neighbors, q_phi


# -- evaluation -----------------------------------------------------------------------------


def eval_max_steps(config: ExperimentConfig, env) -> int:
    if config.eval_max_steps is not None:
        return config.eval_max_steps
    return int(getattr(env, "max_episode_steps", 200))


def _evaluate_one(config: ExperimentConfig, run_dir: str, label: str, seed: int) -> list:
    policy = load_policy(config, run_dir, label, seed)
    base = make_env(config.env, **config.env_options)
    written = []
    for spec in config.perturbations():
        env = apply_perturbation(base, spec, seed=seed)
        rep = evaluate_policy(
            env, policy, config.eval_episodes, eval_max_steps(config, base), EVAL_SEED_OFFSET + 1000 * seed
        )
        path = instance_dir(run_dir, label, seed) / f"eval_{level_tag(spec.kind, spec.level)}.json"
        path.write_text(json.dumps({"kind": spec.kind, "level": spec.level, **rep.to_dict()}, indent=1))
        written.append(path)
    return written


def _run_jobs(fn, jobs, workers: int):
    if workers <= 1:
        return [fn(*job) for job in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        futures = [pool.submit(fn, *job) for job in jobs]
        return [f.result() for f in futures]


def aggregate(config: ExperimentConfig, run_dir, ok: set | None = None) -> list[dict]:
    """Mean and population std across instances of each instance's mean return."""
    rows = []
    for label in config.algorithms:
        for spec in config.perturbations():
            means = []
            for seed in config.instance_seeds():
                if ok is not None and (label, seed) not in ok:
                    continue
                path = instance_dir(run_dir, label, seed) / f"eval_{level_tag(spec.kind, spec.level)}.json"
                means.append(EvalReport.from_dict(json.loads(path.read_text())).mean_return)
            if not means:
                warnings.warn(f"no completed instances for {label}", stacklevel=2)
                continue
            arr = np.asarray(means)
            rows.append(
                {
                    "algorithm": label,
                    "kind": spec.kind,
                    "level": spec.level,
                    "n_instances": len(arr),
                    "mean_return": float(arr.mean()),
                    "std_return": float(arr.std()),
                }
            )
    return rows


def write_aggregate(path, rows: list[dict]) -> None:
    with open(path, "w", newline="") as f:
        f.write(f"# {AGGREGATE_VERSION}\n")
        w = csv.DictWriter(f, fieldnames=list(AGGREGATE_COLUMNS))
        w.writeheader()
        for row in rows:
            w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in row.items()})


def read_aggregate(path) -> list[dict]:
    from robustlab.harness.plot import read_csv_rows

    rows = read_csv_rows(path)
    for r in rows:
        for k in ("level", "mean_return", "std_return"):
            r[k] = float(r[k])
        r["n_instances"] = int(r["n_instances"])
    return rows


# -- manifest --------------------------------------------------------------------------------


def write_manifest(run_dir, config: ExperimentConfig, instances: list, runtime: float) -> dict:
    run_dir = Path(run_dir)
    files = {}
    for p in sorted(run_dir.rglob("*")):
        if p.is_file() and p.name != "manifest.json":
            files[p.relative_to(run_dir).as_posix()] = sha256_file(p)
    manifest = {
        "config": config.to_dict(),
        "code_hash": code_hash(),
        "instances": instances,
        "runtime_seconds": runtime,
        "files": files,
    }
    (run_dir / "manifest.json").write_text(json.dumps(manifest, indent=1, default=float))
    return manifest


def read_manifest(run_dir) -> dict:
    path = Path(run_dir) / "manifest.json"
    if not path.exists():
        raise ConfigError(f"{run_dir} has no manifest.json")
    return json.loads(path.read_text())


def verify_manifest(run_dir) -> list[str]:
    """Problems with the manifest's file index; empty when every file exists with its checksum."""
    manifest = read_manifest(run_dir)
    problems = []
    for rel, digest in manifest["files"].items():
        p = Path(run_dir) / rel
        if not p.exists():
            problems.append(f"missing {rel}")
        elif sha256_file(p) != digest:
            problems.append(f"checksum mismatch {rel}")
    return problems


def config_of_run(run_dir) -> ExperimentConfig:
    path = Path(run_dir) / "config.ini"
    if path.exists():
        return load_config(path)
    return ExperimentConfig.from_dict(read_manifest(run_dir)["config"])


# -- entry points --------------------------------------------------------------------------------


def train_instances(config: ExperimentConfig, run_dir=None) -> tuple[Path, list]:
    run_dir = Path(run_dir or config.output_dir)
    run_dir.mkdir(parents=True, exist_ok=True)
    (run_dir / "config.ini").write_text(dumps_config(config))
    jobs = [(config, str(run_dir), label, seed) for label in config.algorithms for seed in config.instance_seeds()]
    return run_dir, _run_jobs(_train_one, jobs, config.workers)


def evaluate_run(run_dir, config: ExperimentConfig | None = None, instances: list | None = None) -> list[dict]:
    """Evaluate every completed instance across the sweep and rewrite ``aggregate.csv``."""
    config = config or config_of_run(run_dir)
    if instances is None:
        instances = read_manifest(run_dir)["instances"]
    done = [(r["label"], r["seed"]) for r in instances if r["status"] == "ok"]
    failed = [r for r in instances if r["status"] != "ok"]
    if failed:
        warnings.warn(f"{len(failed)} instance(s) failed; aggregating the rest", stacklevel=2)
    _run_jobs(_evaluate_one, [(config, str(run_dir), label, seed) for label, seed in done], config.workers)
    rows = aggregate(config, run_dir, ok=set(done))
    write_aggregate(Path(run_dir) / "aggregate.csv", rows)
    return rows


def run_experiment(config: ExperimentConfig, run_dir=None) -> Path:
    """Train every (label, seed) instance, evaluate across the sweep, aggregate, write the manifest."""
    t0 = time.perf_counter()
    run_dir, instances = train_instances(config, run_dir)
    evaluate_run(run_dir, config, instances)
    write_manifest(run_dir, config, instances, time.perf_counter() - t0)
    return run_dir
