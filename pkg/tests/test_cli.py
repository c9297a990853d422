"""End-to-end checks of the command-line interface.

Runs go through cli.main() in-process with tiny budgets: narrow networks,
a handful of epochs, coarse oracle grids.  The point is the plumbing
(config resolution, artifact layout, exit codes, determinism), not
accuracy.
"""

import argparse
import json
import os

import numpy as np
import pytest

from flamelet_pinn import cli, runio
from flamelet_pinn.pinn import training as tr


def write(path, text):
    with open(path, "w") as f:
        f.write(text)
    return str(path)


def read_json(path):
    with open(path) as f:
        return json.load(f)


QUICK_TRAIN = """
[training]
eval_n_time = 40
oracle_grid_n = 41
eval_nt = 3
data_nt = 3
data_nz = 9
"""


@pytest.fixture(scope="module")
def quick_cfg_file(tmp_path_factory):
    path = tmp_path_factory.mktemp("cfg") / "quick.toml"
    return write(path, QUICK_TRAIN)


@pytest.fixture(scope="module")
def ivp_run(tmp_path_factory, quick_cfg_file):
    out = str(tmp_path_factory.mktemp("runs") / "ivp")
    rc = cli.main(["train-ivp", "--config", quick_cfg_file, "--epochs", "6",
                   "--width", "6", "--n-col", "8", "--out", out])
    assert rc == 0
    return out


@pytest.fixture(scope="module")
def pde_run(tmp_path_factory, quick_cfg_file):
    out = str(tmp_path_factory.mktemp("runs") / "pde")
    rc = cli.main(["train-pde", "--config", quick_cfg_file, "--epochs", "4",
                   "--width", "6", "--n-col", "8", "--out", out])
    assert rc == 0
    return out


@pytest.fixture(scope="module")
def parametric_run(tmp_path_factory, quick_cfg_file):
    out = str(tmp_path_factory.mktemp("runs") / "par")
    rc = cli.main(["train-parametric", "--config", quick_cfg_file,
                   "--epochs", "4", "--width", "6", "--n-col", "8",
                   "--out", out])
    assert rc == 0
    return out


# -- config resolution and exit codes --------------------------------------------


def test_missing_subcommand_is_usage_error():
    with pytest.raises(SystemExit) as e:
        cli.main([])
    assert e.value.code == 2


def test_unknown_section_exits_2(tmp_path, capsys):
    cfg = write(tmp_path / "bad.toml", "[bogus]\nx = 1\n")
    assert cli.main(["solve-ivp", "--config", cfg]) == cli.EXIT_CONFIG
    assert "unknown section [bogus]" in capsys.readouterr().err


def test_unknown_field_exits_2(tmp_path, capsys):
    cfg = write(tmp_path / "bad.toml", "[training]\nnot_a_field = 1\n")
    assert cli.main(["solve-ivp", "--config", cfg]) == cli.EXIT_CONFIG
    assert "no field 'not_a_field'" in capsys.readouterr().err


def test_kind_mismatch_exits_2(tmp_path, capsys):
    cfg = write(tmp_path / "bvp.toml", '[problem]\nkind = "bvp"\n')
    assert cli.main(["solve-ivp", "--config", cfg]) == cli.EXIT_CONFIG
    err = capsys.readouterr().err
    assert "kind = 'bvp'" in err and "'ivp'" in err


def test_malformed_toml_exits_2(tmp_path, capsys):
    cfg = write(tmp_path / "broken.toml", "[problem\nalpha = ")
    assert cli.main(["solve-ivp", "--config", cfg]) == cli.EXIT_CONFIG
    assert "config error" in capsys.readouterr().err


def test_missing_config_file_exits_2(tmp_path):
    missing = str(tmp_path / "nope.toml")
    assert cli.main(["solve-ivp", "--config", missing]) == cli.EXIT_CONFIG


def test_unknown_ablation_flag_exits_2(tmp_path, capsys):
    out = str(tmp_path / "run")
    rc = cli.main(["train-ivp", "--epochs", "1", "--flag", "bogus",
                   "--out", out])
    assert rc == cli.EXIT_CONFIG
    assert "bogus" in capsys.readouterr().err


def test_bad_alpha_exits_2(tmp_path):
    out = str(tmp_path / "run")
    rc = cli.main(["solve-bvp", "--alpha", "-3", "--out", out])
    assert rc == cli.EXIT_CONFIG


def test_config_overrides(quick_cfg_file, tmp_path):
    # file value survives unless a flag overrides it
    args = argparse.Namespace(config=quick_cfg_file, seed=None, alpha=None,
                              alpha_min=None, alpha_max=None, alpha_init=None,
                              epochs=2, width=None, depth=None, n_col=None,
                              lr=None, noise=None, flag=[])
    cfg = cli.resolve_config("ivp", args)
    assert cfg.epochs == 2
    assert cfg.eval_n_time == 40
    assert cfg.oracle_grid_n == 41


def test_flag_override_replaces_file_flags(tmp_path):
    cfg_file = write(tmp_path / "abl.toml",
                     '[ablation]\nflags = ["vanilla_baseline"]\n')
    base = dict(config=cfg_file, seed=None, alpha=None, alpha_min=None,
                alpha_max=None, alpha_init=None, epochs=None, width=None,
                depth=None, n_col=None, lr=None, noise=None)
    cfg = cli.resolve_config("ivp", argparse.Namespace(**base, flag=[]))
    assert cfg.flags == ("vanilla_baseline",)
    cfg = cli.resolve_config(
        "ivp", argparse.Namespace(**base, flag=["no_res_scaling"]))
    assert cfg.flags == ("no_res_scaling",)


def test_threads_env(monkeypatch):
    monkeypatch.delenv("FLAMELET_PINN_THREADS", raising=False)
    assert cli.max_workers() >= 1
    monkeypatch.setenv("FLAMELET_PINN_THREADS", "3")
    assert cli.max_workers() == 3
    monkeypatch.setenv("FLAMELET_PINN_THREADS", "abc")
    with pytest.raises(cli.ConfigError):
        cli.max_workers()
    monkeypatch.setenv("FLAMELET_PINN_THREADS", "0")
    with pytest.raises(cli.ConfigError):
        cli.max_workers()


# -- classical solves ------------------------------------------------------------


def test_solve_ivp_artifacts(tmp_path, quick_cfg_file, capsys):
    out = str(tmp_path / "ivp")
    assert cli.main(["solve-ivp", "--config", quick_cfg_file,
                     "--out", out]) == 0
    assert "wrote" in capsys.readouterr().out
    cfg_doc = read_json(os.path.join(out, "config.json"))
    metrics = read_json(os.path.join(out, "metrics.json"))
    assert metrics["config_hash"] == cfg_doc["config_hash"]
    assert metrics["kind"] == "ivp"
    assert metrics["T_final"] > metrics["T_initial"]
    assert metrics["mass_sum_max_dev"] < 1e-9
    t, T, Y, meta = runio.read_trajectory_csv(
        os.path.join(out, "trajectory.csv"))
    assert t.shape == (41,) and Y.shape == (41, 4)
    assert np.all(np.abs(Y.sum(axis=1) - 1.0) < 1e-9)
    assert meta["config_hash"] == cfg_doc["config_hash"]


def test_solve_bvp_artifacts(tmp_path, quick_cfg_file):
    out = str(tmp_path / "bvp")
    assert cli.main(["solve-bvp", "--config", quick_cfg_file, "--alpha", "5",
                     "--out", out]) == 0
    metrics = read_json(os.path.join(out, "metrics.json"))
    assert metrics["alpha"] == 5.0
    assert metrics["T_max"] > 1300.0
    assert metrics["residual_norm"] < 1e-8
    t, z, T, Y, _ = runio.read_field_csv(os.path.join(out, "field.csv"))
    assert z.shape == (41,)
    assert Y.shape[-1] == 4


def test_solve_pde_artifacts(tmp_path, quick_cfg_file):
    out = str(tmp_path / "pde")
    assert cli.main(["solve-pde", "--config", quick_cfg_file, "--alpha", "1",
                     "--out", out]) == 0
    t, z, T, Y, _ = runio.read_field_csv(os.path.join(out, "field.csv"))
    assert t.shape == (3,) and z.shape == (41,) and Y.shape == (3, 41, 4)
    assert t[0] == 0.0
    metrics = read_json(os.path.join(out, "metrics.json"))
    assert metrics["T_max_final"] > 1045.0


# -- training runs ---------------------------------------------------------------


def test_train_ivp_artifacts(ivp_run):
    for name in ("config.json", "metrics.json", "history.csv",
                 "checkpoint.npz", "trajectory.csv"):
        assert os.path.exists(os.path.join(ivp_run, name)), name
    metrics = read_json(os.path.join(ivp_run, "metrics.json"))
    assert metrics["aborted"] is False
    assert np.isfinite(metrics["rel_l2"]) and np.isfinite(metrics["mae"])
    assert metrics["final_loss"] > 0.0
    history, _ = runio.read_history_csv(os.path.join(ivp_run, "history.csv"))
    assert history.shape[0] == 6
    cfg, state = cli.load_run(ivp_run)
    assert cfg.kind == "ivp" and cfg.epochs == 6
    assert np.all(np.isfinite(state["params"]))


def test_train_rerun_is_byte_identical(tmp_path, quick_cfg_file, ivp_run):
    out = str(tmp_path / "again")
    rc = cli.main(["train-ivp", "--config", quick_cfg_file, "--epochs", "6",
                   "--width", "6", "--n-col", "8", "--out", out])
    assert rc == 0
    for name in ("history.csv", "metrics.json", "config.json"):
        with open(os.path.join(ivp_run, name), "rb") as f:
            first = f.read()
        with open(os.path.join(out, name), "rb") as f:
            second = f.read()
        assert first == second, name


def test_train_pde_artifacts(pde_run):
    t, z, T, Y, meta = runio.read_field_csv(os.path.join(pde_run, "field.csv"))
    assert t.shape == (3,) and z.shape == (41,)
    assert meta["source"] == "pinn"
    metrics = read_json(os.path.join(pde_run, "metrics.json"))
    assert metrics["kind"] == "pde" and metrics["aborted"] is False


def test_infer_alpha_artifacts(tmp_path, quick_cfg_file):
    out = str(tmp_path / "inv")
    rc = cli.main(["infer-alpha", "--config", quick_cfg_file,
                   "--alpha-true", "10", "--epochs", "3", "--width", "6",
                   "--n-col", "8", "--out", out])
    assert rc == 0
    metrics = read_json(os.path.join(out, "metrics.json"))
    assert metrics["kind"] == "inverse"
    assert metrics["alpha_true"] == 10.0
    assert metrics["alpha_hat"] > 0.0
    assert metrics["alpha_rel_error"] == pytest.approx(
        abs(metrics["alpha_hat"] - 10.0) / 10.0)
    history, columns = runio.read_history_csv(
        os.path.join(out, "history.csv"))
    # strain-rate trail starts at the optimizer's initial guess
    assert history[0, columns.index("alpha")] == pytest.approx(5.0, rel=1e-6)


# -- evaluation and reports ------------------------------------------------------


def test_eval_run(ivp_run, capsys):
    assert cli.main(["eval", "--run", ivp_run]) == 0
    line = capsys.readouterr().out
    assert "kind=ivp" in line and "rel_l2" in line


def test_eval_rescore_matches_training_metrics(ivp_run, tmp_path):
    out = str(tmp_path / "rescored")
    trained = read_json(os.path.join(ivp_run, "metrics.json"))
    assert cli.main(["eval", "--run", ivp_run, "--out", out]) == 0
    rescored = read_json(os.path.join(out, "metrics.json"))
    assert rescored["rel_l2"] == pytest.approx(trained["rel_l2"], rel=1e-9)
    assert rescored["mae"] == pytest.approx(trained["mae"], rel=1e-9)


def test_eval_requires_run(capsys):
    assert cli.main(["eval"]) == cli.EXIT_CONFIG
    assert "--run" in capsys.readouterr().err


def test_eval_unknown_reference(ivp_run):
    rc = cli.main(["eval", "--run", ivp_run, "--against", "exact"])
    assert rc == cli.EXIT_CONFIG


def test_eval_rejects_non_run_dir(tmp_path):
    assert cli.main(["eval", "--run", str(tmp_path)]) == cli.EXIT_CONFIG


def test_eval_table(pde_run, tmp_path, capsys):
    out = str(tmp_path / "report")
    rc = cli.main(["eval", "--table", "--runs", pde_run, str(tmp_path),
                   "--out", out])
    assert rc == 0
    shown = capsys.readouterr().out
    assert "pde@1" in shown
    with open(os.path.join(out, "table1.csv")) as f:
        lines = f.read().splitlines()
    assert lines[0].split(",")[0] == "case"
    assert "proposed_rel_l2" in lines[0]
    row = lines[1].split(",")
    assert row[0] == "pde@1"
    assert row[1] == "absent"            # no vanilla run supplied
    assert float(row[6]) > 0.0           # proposed rel_l2 cell
    assert os.path.exists(os.path.join(out, "table1.txt"))


def test_ablate_requires_flag(tmp_path):
    out = str(tmp_path / "abl")
    assert cli.main(["ablate", "--out", out]) == cli.EXIT_CONFIG


def test_ablate_writes_both_runs(tmp_path, quick_cfg_file):
    out = str(tmp_path / "abl")
    rc = cli.main(["ablate", "--config", quick_cfg_file, "--epochs", "3",
                   "--width", "6", "--n-col", "8",
                   "--flag", "no_res_scaling", "--out", out])
    assert rc == 0
    prop = read_json(os.path.join(out, "proposed", "config.json"))
    abl = read_json(os.path.join(out, "ablated", "config.json"))
    assert prop["config"]["flags"] == []
    assert abl["config"]["flags"] == ["no_res_scaling"]
    with open(os.path.join(out, "ablation.csv")) as f:
        lines = f.read().splitlines()
    assert lines[0] == "label,flags,mae,rel_l2"
    assert len(lines) == 3
    assert lines[1].startswith("proposed,") and lines[2].startswith("ablated,")


def test_sweep_rejects_non_parametric(ivp_run, capsys):
    assert cli.main(["sweep", "--run", ivp_run, "-n", "1"]) == cli.EXIT_CONFIG
    assert "parametric" in capsys.readouterr().err


def test_sweep_artifacts(parametric_run, tmp_path, monkeypatch):
    monkeypatch.setenv("FLAMELET_PINN_THREADS", "1")
    out = str(tmp_path / "sw")
    rc = cli.main(["sweep", "--run", parametric_run, "-n", "2",
                   "--alpha-min", "1", "--alpha-max", "10", "--out", out])
    assert rc == 0
    with open(os.path.join(out, "sweep.csv")) as f:
        lines = f.read().splitlines()
    assert lines[0].startswith("alpha,rel_l2,mae,rel_l2_")
    assert len(lines) == 3
    alphas = [float(line.split(",")[0]) for line in lines[1:]]
    assert alphas == sorted(alphas)
    assert alphas[0] == pytest.approx(1.0) and alphas[-1] == pytest.approx(10.0)
    meta = read_json(os.path.join(out, "sweep.meta.json"))
    assert meta["n"] == 2
    cfg, _ = cli.load_run(parametric_run)
    assert meta["config_hash"] == cfg.hash()


def test_sweep_helpers_validate():
    with pytest.raises(cli.ConfigError):
        cli.sweep_alpha(1.0, 10.0, 0, lambda a: {"alpha": a})
    with pytest.raises(cli.ConfigError):
        cli.sweep_alpha(-1.0, 10.0, 2, lambda a: {"alpha": a})
    out = cli.sweep_alpha(2.0, 8.0, 3, lambda a: {"alpha": float(a)},
                          workers=1)
    assert [r["alpha"] for r in out] == sorted(r["alpha"] for r in out)
