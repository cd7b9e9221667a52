import subprocess
import sys

import numpy as np
import pytest

from robustlab.harness.cli import main
from robustlab.mdp import random_mdp, save_mdp

TINY = ["--set", "max_episodes=10", "--set", "warmup_steps=20", "--set", "eval_every=0", "--episodes", "2", "--instances", "1"]


def test_oracle_assert_passes(capsys):
    assert main(["oracle", "--R", "0.2", "--gamma", "0.9", "--assert"]) == 0
    out = capsys.readouterr().out
    assert "converged=True" in out and out.rstrip().endswith("C C C C C C C C C C G")


def test_oracle_on_mdp_file(tmp_path):
    save_mdp(random_mdp(np.random.default_rng(0), 4, 2, 0.8), tmp_path / "m.txt")
    assert main(["oracle", "--mdp", str(tmp_path / "m.txt"), "--kind", "rc", "--R", "0.5", "--assert", "--out", str(tmp_path / "q.npy")]) == 0
    assert np.load(tmp_path / "q.npy").shape == (4, 2)


def test_oracle_check_failure_exits_three():
    assert main(["oracle", "--gamma", "0.99", "--max-iters", "3", "--assert"]) == 3


def test_config_errors_exit_one(tmp_path, capsys):
    assert main(["sweep", "--env", "atari"]) == 1
    assert main(["sweep", "--algorithms", "q_learning", "--set", "alpha"]) == 1
    assert main(["sweep", "--config", str(tmp_path / "none.ini")]) == 1
    assert main(["oracle", "--kind", "ball"]) == 1
    assert "config error" in capsys.readouterr().err


def test_malformed_plot_input_exits_one(tmp_path, capsys):
    bad = tmp_path / "bad.csv"
    bad.write_text("algorithm,level,mean_return\na,0\n")
    assert main(["plot", str(bad), "--out", str(tmp_path / "x.svg")]) == 1
    assert "line 2" in capsys.readouterr().err


def test_sweep_then_views(tmp_path, capsys):
    out = tmp_path / "run"
    assert main(["sweep", "--algorithms", "q_learning,arq", "--R", "0.2", "--levels", "0,0.1", "--out", str(out), *TINY]) == 0
    assert (out / "aggregate.csv").exists()
    assert main(["show-policy", str(out), "--algorithm", "arq"]) == 0
    assert main(["show-policy", str(out), "--max-states"]) == 0
    assert main(["plot", str(out / "aggregate.csv"), "--out", str(tmp_path / "p.svg")]) == 0
    assert main(["runtime-table", str(out)]) == 0
    assert main(["eval", str(out), "--levels", "0.2"]) == 0
    text = capsys.readouterr().out
    assert "arq" in text and "vs base" in text


def test_train_then_eval(tmp_path):
    out = tmp_path / "run"
    assert main(["train", "--algorithms", "prq", "--R", "0.1", "--out", str(out), *TINY]) == 0
    assert main(["eval", str(out)]) == 0
    assert (out / "aggregate.csv").exists()


def test_show_policy_on_deep_run_exits_two(tmp_path):
    out = tmp_path / "deep"
    args = ["sweep", "--env", "cartpole", "--algorithms", "dqn", "--instances", "1", "--episodes", "1", "--out", str(out)]
    args += ["--set", "total_steps=60", "--set", "warmup=30", "--set", "eval_every=30", "--set", "eval_episodes=1", "--set", "hidden=8"]
    assert main(args) == 0
    assert main(["show-policy", str(out)]) == 2


def test_grad_check_command():
    assert main(["grad-check", "--trials", "20"]) == 0


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "robustlab", "oracle", "--gamma", "0.5", "--kind", "nominal"], capture_output=True, text=True)
    assert proc.returncode == 0 and "nominal" in proc.stdout
