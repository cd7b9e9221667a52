"""Command line entry point: ``robustlab <command> ...``.

Exit codes: 0 success, 1 configuration error, 2 runtime failure, 3 failed check.
"""

from __future__ import annotations

import argparse
import logging
import sys
import time
from dataclasses import replace

import numpy as np

from robustlab.bellman import UncertaintySetSpec, kernel_neighbor_sets, robust_backup, robust_value_iteration
from robustlab.envs import GridEnv, make_env
from robustlab.errors import CapabilityError, ConfigError, ContractError, DivergenceError
from robustlab.harness.config import ExperimentConfig, load_config
from robustlab.harness.plot import emit_plot
from robustlab.harness.runner import (
    evaluate_run,
    read_manifest,
    run_experiment,
    train_instances,
    write_manifest,
    config_of_run,
)
from robustlab.harness.views import compare_runtime, format_runtime_table, policy_grid, show_policy
from robustlab.mdp import load_mdp
from robustlab.neural import grad_check, grad_check_input, init_mlp, squared_loss

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME, EXIT_CHECK = 0, 1, 2, 3


def _add_experiment_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="experiment INI file")
    p.add_argument("--env", help="environment id")
    p.add_argument("--algorithms", help="comma-separated algorithm labels")
    p.add_argument("--instances", type=int, help="number of training instances")
    p.add_argument("--seed", type=int, help="base seed; instance i uses seed + i")
    p.add_argument("--R", type=float, help="robustness level for every label")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="training field override")
    p.add_argument("--episodes", type=int, help="evaluation episodes per instance and level")
    p.add_argument("--levels", help="comma-separated perturbation levels")
    p.add_argument("--kind", choices=("action", "parameter"), help="perturbation kind")
    p.add_argument("--parameter", help="physical parameter to scale for parameter perturbations")
    p.add_argument("--workers", type=int, help="parallel worker processes")
    p.add_argument("--out", help="run directory")


def build_config(args) -> ExperimentConfig:
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    changes = {}
    if args.env:
        changes["env"] = args.env
    if args.algorithms:
        changes["algorithms"] = [a.strip() for a in args.algorithms.split(",") if a.strip()]
    if args.instances is not None:
        changes["n_instances"] = args.instances
    if args.seed is not None:
        changes["base_seed"] = args.seed
    if args.episodes is not None:
        changes["eval_episodes"] = args.episodes
    if args.levels:
        try:
            changes["levels"] = [float(x) for x in args.levels.split(",")]
        except ValueError:
            raise ConfigError(f"bad --levels {args.levels!r}") from None
    if args.kind:
        changes["perturbation_kind"] = args.kind
    if args.parameter:
        changes["parameter"] = args.parameter
    if args.workers is not None:
        changes["workers"] = args.workers
    if args.out:
        changes["output_dir"] = args.out
    train = dict(cfg.train)
    for item in args.set:
        if "=" not in item:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        k, v = item.split("=", 1)
        train[k.strip()] = v.strip()
    if args.R is not None:
        train["R"] = str(args.R)
    changes["train"] = train
    return replace(cfg, **changes)


# -- commands ------------------------------------------------------------------------


def cmd_train(args) -> int:
    cfg = build_config(args)
    t0 = time.perf_counter()
    run_dir, instances = train_instances(cfg)
    write_manifest(run_dir, cfg, instances, time.perf_counter() - t0)
    failed = sum(r["status"] != "ok" for r in instances)
    print(f"trained {len(instances) - failed}/{len(instances)} instances into {run_dir}")
    return EXIT_RUNTIME if failed == len(instances) else EXIT_OK


def cmd_eval(args) -> int:
    manifest = read_manifest(args.run_dir)
    cfg = config_of_run(args.run_dir)
    if args.episodes is not None:
        cfg = replace(cfg, eval_episodes=args.episodes)
    if args.levels:
        cfg = replace(cfg, levels=[float(x) for x in args.levels.split(",")])
    rows = evaluate_run(args.run_dir, cfg, manifest["instances"])
    write_manifest(args.run_dir, cfg, manifest["instances"], manifest["runtime_seconds"])
    _print_aggregate(rows)
    return EXIT_OK


def cmd_sweep(args) -> int:
    cfg = build_config(args)
    run_dir = run_experiment(cfg)
    from robustlab.harness.runner import read_aggregate

    _print_aggregate(read_aggregate(run_dir / "aggregate.csv"))
    print(f"results in {run_dir}")
    return EXIT_OK


def _print_aggregate(rows) -> None:
    print(f"{'algorithm':<16}{'kind':<10}{'level':>8}{'n':>4}{'mean':>12}{'std':>10}")
    for r in rows:
        print(f"{r['algorithm']:<16}{r['kind']:<10}{r['level']:>8.3g}{r['n_instances']:>4}{r['mean_return']:>12.3f}{r['std_return']:>10.3f}")


def cmd_oracle(args) -> int:
    if args.mdp:
        mdp, env = load_mdp(args.mdp), None
    else:
        env = make_env(args.env, slippery=args.slippery) if args.env == "frozenlake" else make_env(args.env)
        if not isinstance(env, GridEnv):
            raise CapabilityError(f"{args.env} is not tabular; the oracle needs a finite MDP")
        mdp = env.to_mdp(args.gamma)
    spec = UncertaintySetSpec(args.kind, args.R)
    neighbors = kernel_neighbor_sets(mdp)
    res = robust_value_iteration(mdp, spec, neighbors, tol=args.tol, max_iters=args.max_iters)
    print(f"{spec.kind} R={spec.R:g} gamma={mdp.gamma:g}: {res.iterations} sweeps, residual {res.residual:.3e}, converged={res.converged}")
    if env is not None:
        print(policy_grid(env, res.q))
    if args.out:
        np.save(args.out, res.q)
    if not args.assert_:
        return EXIT_OK
    problems = []
    if not res.converged:
        problems.append("did not converge")
    r = np.asarray(res.residuals)
    # contraction: each step shrinks by gamma, up to rounding in the Q values themselves
    slack = 64 * np.finfo(float).eps * max(1.0, float(np.abs(res.q).max()))
    bad = np.nonzero(r[1:] > mdp.gamma * r[:-1] + slack)[0]
    if len(bad):
        k = int(bad[0])
        problems.append(f"residual grew from {r[k]:.3e} to {r[k + 1]:.3e} (ratio above gamma)")
    fixed = np.abs(robust_backup(mdp, spec, neighbors, res.q) - res.q).max()
    if fixed > args.tol / (1 - mdp.gamma):
        problems.append(f"fixed-point residual {fixed:.3e}")
    for p in problems:
        print(f"CHECK FAILED: {p}")
    return EXIT_CHECK if problems else EXIT_OK


def cmd_plot(args) -> int:
    emit_plot(args.csv, args.out, title=args.title or "", x=args.x, y=args.y)
    print(f"wrote {args.out}")
    return EXIT_OK


def cmd_show_policy(args) -> int:
    print(show_policy(args.run_dir, args.algorithm, args.seed, args.max_states))
    return EXIT_OK


def cmd_grad_check(args) -> int:
    rng = np.random.default_rng(args.seed)
    worst = 0.0
    for i in range(args.trials):
        sizes = [int(rng.integers(1, 6))] + [int(rng.integers(1, 8)) for _ in range(rng.integers(0, 3))] + [int(rng.integers(1, 4))]
        net = init_mlp(sizes, rng, output="tanh" if i % 2 else "linear", scale=float(rng.uniform(0.5, 3)))
        x = rng.normal(size=(int(rng.integers(1, 5)), sizes[0]))
        loss = squared_loss(rng.normal(size=(x.shape[0], sizes[-1])))
        rep = grad_check(net, loss, x, tol=args.tol)
        worst = max(worst, rep.worst_rel_err, grad_check_input(net, loss, x))
    ok = worst < args.tol
    print(f"{args.trials} random nets: worst relative error {worst:.3e} ({'ok' if ok else 'FAILED'}, tol {args.tol:g})")
    return EXIT_OK if ok else EXIT_CHECK


def cmd_runtime_table(args) -> int:
    rows = compare_runtime(args.run_dirs)
    print(format_runtime_table(rows))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="robustlab", description="robust reinforcement learning experiments")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train instances without evaluating them")
    _add_experiment_flags(p)
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("eval", help="evaluate a trained run across its perturbation sweep")
    p.add_argument("run_dir")
    p.add_argument("--episodes", type=int)
    p.add_argument("--levels")
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("sweep", help="train, evaluate and aggregate")
    _add_experiment_flags(p)
    p.set_defaults(fn=cmd_sweep)

    p = sub.add_parser("oracle", help="exact robust value iteration on a tabular problem")
    p.add_argument("--env", default="cliffwalking", choices=("cliffwalking", "frozenlake"))
    p.add_argument("--slippery", action="store_true")
    p.add_argument("--mdp", help="MDP text file instead of a grid")
    p.add_argument("--kind", default="adjacent", help="nominal | r_contamination | adjacent_r_contamination")
    p.add_argument("--R", type=float, default=0.0)
    p.add_argument("--gamma", type=float, default=0.99)
    p.add_argument("--tol", type=float, default=1e-8)
    p.add_argument("--max-iters", type=int, default=100000)
    p.add_argument("--out", help="save the Q-table (.npy)")
    p.add_argument("--assert", dest="assert_", action="store_true", help="exit 3 unless the solution checks out")
    p.set_defaults(fn=cmd_oracle)

    p = sub.add_parser("plot", help="SVG chart from aggregate or training-log CSVs")
    p.add_argument("csv", nargs="+")
    p.add_argument("--out", required=True)
    p.add_argument("--title")
    p.add_argument("--x")
    p.add_argument("--y")
    p.set_defaults(fn=cmd_plot)

    p = sub.add_parser("show-policy", help="greedy-action grid of a tabular run")
    p.add_argument("run_dir")
    p.add_argument("--algorithm")
    p.add_argument("--seed", type=int)
    p.add_argument("--max-states", action="store_true", help="show argmax over the neighbour set instead")
    p.set_defaults(fn=cmd_show_policy)

    p = sub.add_parser("grad-check", help="finite-difference check of the network gradients")
    p.add_argument("--trials", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--tol", type=float, default=1e-4)
    p.set_defaults(fn=cmd_grad_check)

    p = sub.add_parser("runtime-table", help="training time per algorithm across runs")
    p.add_argument("run_dirs", nargs="+")
    p.set_defaults(fn=cmd_runtime_table)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.fn(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (CapabilityError, ContractError, DivergenceError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
