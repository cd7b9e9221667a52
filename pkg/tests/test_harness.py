import json
import shutil

import numpy as np
import pytest

from robustlab.envs import cliffwalking_env, true_neighbor_sets
from robustlab.errors import ConfigError, ParseError
from robustlab.harness import (
    ExperimentConfig,
    compare_runtime,
    dumps_config,
    emit_plot,
    load_series,
    parse_config,
    read_aggregate,
    read_manifest,
    render_svg,
    run_experiment,
    show_policy,
    verify_manifest,
)
from robustlab.harness.views import format_runtime_table, max_state_grid, policy_grid
from robustlab.tabular import TrainConfig

TINY = {"max_episodes": "15", "warmup_steps": "20", "eval_every": "0", "alpha": "0.2"}
LEVELS = [0.0, 0.05, 0.1, 0.15, 0.2]


def tiny_config(**kw):
    base = dict(
        env="cliffwalking",
        algorithms=["q_learning", "robust_q", "arq", "prq"],
        train=TINY,
        per_algorithm={"arq": {"R": 0.2}, "prq": {"R": 0.2}, "robust_q": {"R": 0.2}},
        levels=LEVELS,
        n_instances=1,
        eval_episodes=3,
        eval_max_steps=30,
    )
    base.update(kw)
    return ExperimentConfig(**base)


@pytest.fixture(scope="module")
def tiny_run(tmp_path_factory):
    return run_experiment(tiny_config(), tmp_path_factory.mktemp("run"))


def test_aggregate_has_one_row_per_algorithm_and_level(tiny_run):
    rows = read_aggregate(tiny_run / "aggregate.csv")
    assert len(rows) == 4 * 5
    assert {(r["algorithm"], r["level"]) for r in rows} == {(a, p) for a in tiny_config().algorithms for p in LEVELS}
    assert (tiny_run / "aggregate.csv").read_text().startswith("# robustlab-aggregate v1\n")


def test_single_instance_has_zero_std(tiny_run):
    rows = read_aggregate(tiny_run / "aggregate.csv")
    assert all(r["std_return"] == 0.0 and r["n_instances"] == 1 for r in rows)
    ev = json.loads((tiny_run / "q_learning" / "seed_0" / "eval_action_0.1.json").read_text())
    row = next(r for r in rows if r["algorithm"] == "q_learning" and r["level"] == 0.1)
    assert row["mean_return"] == ev["mean_return"]


def test_rerun_gives_identical_aggregate(tiny_run, tmp_path):
    again = run_experiment(tiny_config(), tmp_path / "again")
    assert (again / "aggregate.csv").read_bytes() == (tiny_run / "aggregate.csv").read_bytes()


def test_manifest_indexes_files(tiny_run, tmp_path):
    assert verify_manifest(tiny_run) == []
    manifest = read_manifest(tiny_run)
    assert "q_learning/seed_0/q.npy" in manifest["files"]
    assert all(i["status"] == "ok" for i in manifest["instances"])
    copy = tmp_path / "copy"
    shutil.copytree(tiny_run, copy)
    np.save(copy / "arq" / "seed_0" / "q.npy", np.ones((48, 4)))
    assert verify_manifest(copy) == ["checksum mismatch arq/seed_0/q.npy"]


def test_single_run_gives_one_row_table(tmp_path):
    run = run_experiment(tiny_config(algorithms=["arq"], levels=[0.0]), tmp_path / "one")
    rows = compare_runtime([run])
    assert len(rows) == 1 and np.isnan(rows[0]["ratio_to_base"])


def test_parallel_workers_match_serial(tiny_run, tmp_path):
    cfg = tiny_config(workers=2, levels=[0.1], algorithms=["q_learning", "arq"])
    par = read_aggregate(run_experiment(cfg, tmp_path / "par") / "aggregate.csv")
    ser = {(r["algorithm"], r["level"]): r["mean_return"] for r in read_aggregate(tiny_run / "aggregate.csv")}
    assert all(ser[(r["algorithm"], r["level"])] == r["mean_return"] for r in par)


def test_show_policy_and_max_states(tiny_run):
    text = show_policy(tiny_run, "prq")
    assert text.splitlines()[0] == "prq seed 0 on cliffwalking: greedy actions"
    assert len(text.splitlines()) == 5
    assert "max-state" in show_policy(tiny_run, "arq", max_states=True)
    with pytest.raises(ConfigError):
        show_policy(tiny_run, "dqn")


def test_uniform_q_table_points_left():
    env = cliffwalking_env()
    grid = policy_grid(env, np.zeros((env.n_states, 4)))
    rows = grid.splitlines()
    assert rows[0] == " ".join(["<"] * 12)
    assert rows[3].split() == ["<"] + ["C"] * 10 + ["G"]


def test_max_state_grid_symbols():
    env = cliffwalking_env()
    q = np.zeros((env.n_states, 4))
    q[env.to_state((0, 0))] = 5.0
    text = max_state_grid(env, q, true_neighbor_sets(env))
    assert text.splitlines()[1].split()[0] == "^"


def test_runtime_table(tiny_run):
    rows = compare_runtime([tiny_run])
    assert {r["algorithm"] for r in rows} == {"q_learning", "robust_q", "arq", "prq"}
    by = {r["algorithm"]: r for r in rows}
    assert np.isnan(by["q_learning"]["ratio_to_base"])
    assert by["arq"]["ratio_to_base"] == pytest.approx(by["arq"]["runtime_mean"] / by["q_learning"]["runtime_mean"])
    assert len(format_runtime_table(rows).splitlines()) == 5
    with pytest.warns(UserWarning):
        assert compare_runtime([tiny_run.parent / "nowhere"]) == []


# -- configuration ------------------------------------------------------------------------------

INI = """
[experiment]
env = cliffwalking
algorithms = q_learning, arq, prq_rand   # trailing comment
n_instances = 2
eval_episodes = 10

[train]
max_episodes = 50
alpha = 0.1

[algorithm.arq]
R = 0.2

[algorithm.prq_rand]
algorithm = prq
R = 0.1
random_pessimist = yes

[perturbation]
kind = action
levels = 0, 0.1
"""


def test_parse_config_and_roundtrip():
    cfg = parse_config(INI)
    assert cfg.algorithms == ["q_learning", "arq", "prq_rand"]
    assert cfg.algorithm_of("prq_rand") == "prq"
    tc = cfg.train_config("prq_rand", seed=7)
    assert isinstance(tc, TrainConfig) and tc.R == 0.1 and tc.random_pessimist and tc.max_episodes == 50 and tc.seed == 7
    assert cfg.instance_seeds() == [0, 1]
    back = parse_config(dumps_config(cfg))
    assert back.to_dict() == cfg.to_dict()


def test_defaults_follow_five_instances_and_hundred_tests():
    cfg = ExperimentConfig()
    assert cfg.n_instances == 5 and cfg.eval_episodes == 100


@pytest.mark.parametrize(
    "text",
    [
        "[train]\nalpha = 1\n",
        "[experiment]\nenv = atari\n",
        "[experiment]\nalgorithms = sarsa\n",
        "[experiment]\nalgorithms = dqn\n",
        "[experiment]\ncolour = red\n",
        "[experiment]\n[train]\nalpha = fast\n",
        "[experiment]\n[train]\nmomentum = 0.9\n",
        "[experiment]\n[perturbation]\nlevels = 0, x\n",
        "[experiment]\n[perturbation]\nlevels = 1.5\n",
        "[experiment]\n[bogus]\n",
        "[experiment\n",
    ],
)
def test_bad_configs_raise_config_error(text):
    with pytest.raises(ConfigError):
        parse_config(text)


def test_deep_label_gets_deep_config():
    cfg = ExperimentConfig(env="pendulum", algorithms=["pr_ddpg"], train={"total_steps": "100", "hidden": "8, 8"})
    dc = cfg.train_config("pr_ddpg", seed=3)
    assert dc.algorithm == "pr_ddpg" and dc.hidden == (8, 8) and dc.total_steps == 100 and dc.seed == 3


# -- plots ----------------------------------------------------------------------------------------


def write_csv(path, text):
    path.write_text(text)
    return path


AGG = """# robustlab-aggregate v1
algorithm,kind,level,n_instances,mean_return,std_return
a,action,0.0,5,-10,1
a,action,0.1,5,-12,2
a,action,0.2,5,-15,2
b,action,0.0,5,-11,0.5
b,action,0.1,5,-11,0.5
b,action,0.2,5,-13,1
"""


def test_svg_structure(tmp_path):
    svg = emit_plot([write_csv(tmp_path / "agg.csv", AGG)], tmp_path / "out.svg", title="demo")
    assert svg.count("<polyline") == 2 and svg.count('class="band"') == 2
    assert (tmp_path / "out.svg").read_text() == svg
    assert emit_plot([tmp_path / "agg.csv"], title="demo") == svg


def test_constant_series_has_flat_zero_band():
    svg = render_svg({"flat": ([0.0, 1.0, 2.0], [3.0, 3.0, 3.0], [0.0, 0.0, 0.0])})
    line = svg.split('<polyline points="')[1].split('"')[0]
    ys = {p.split(",")[1] for p in line.split()}
    assert len(ys) == 1
    band = svg.split('class="band" d="')[1].split('"')[0]
    band_ys = {p.split(",")[1] for p in band.replace("M ", "").replace(" Z", "").split(" L ")}
    assert band_ys == ys


def test_missing_std_warns_and_omits_bands(tmp_path):
    path = write_csv(tmp_path / "nostd.csv", "algorithm,level,mean_return\na,0,1\na,1,2\n")
    with pytest.warns(UserWarning, match="bands omitted"):
        svg = emit_plot([path])
    assert svg.count("<polyline") == 1 and 'class="band"' not in svg


def test_malformed_csv_reports_line(tmp_path):
    path = write_csv(tmp_path / "bad.csv", "# header comment\nalgorithm,level,mean_return,std_return\na,0,1,0\na,1,2\n")
    with pytest.raises(ParseError) as info:
        load_series([path])
    assert info.value.lineno == 4 and "line 4" in str(info.value)


def test_training_log_series(tmp_path):
    d = tmp_path / "pr_dqn"
    d.mkdir()
    path = write_csv(d / "train_log.csv", "step,eval_return_mean,eval_return_std\n100,5,1\n200,7,1\n")
    series = load_series([path])
    assert series == {"pr_dqn": ([100.0, 200.0], [5.0, 7.0], [1.0, 1.0])}
