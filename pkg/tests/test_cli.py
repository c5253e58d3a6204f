"""Command-line interface: calculators, experiment runs, exit codes."""

import json

import pytest

from ldpgof.cli import EXIT_CHECK, EXIT_CONFIG, main


def test_calc_rate_continuous(capsys):
    assert main(["calc", "rate", "--n", "10000", "--alpha", "0.5", "--s", "1"]) == 0
    out = json.loads(capsys.readouterr().out)
    assert out["upper_kernel"] == pytest.approx(2500 ** (-2 / 7), rel=1e-12)
    # z_alpha >= alpha, so the lower kernel never exceeds the upper one
    assert out["lower_kernel"] <= out["upper_kernel"]


def test_calc_rate_discrete(capsys):
    assert main(["calc", "rate", "--n", "10000", "--alpha", "0.5", "--d", "16"]) == 0
    out = json.loads(capsys.readouterr().out)
    assert out["upper_kernel"] == pytest.approx(0.04, rel=1e-12)


def test_calc_epsilon(capsys):
    code = main(["calc", "epsilon", "--n", "1000", "--alpha", "0.5", "--level", "8",
                 "--gamma", "0.05", "--beta", "0.05"])
    assert code == 0
    out = json.loads(capsys.readouterr().out)
    assert 0 < out["epsilon"] < 1


def test_calc_epsilon_invalid_levels(capsys):
    code = main(["calc", "epsilon", "--n", "1000", "--alpha", "0.5", "--level", "8",
                 "--gamma", "0.45", "--beta", "0.2"])
    assert code == EXIT_CONFIG


def test_level_run_and_check(tmp_path, capsys):
    cfg = {"ns": [40], "alphas": [1.0], "gammas": [0.1], "levels": [4],
           "trials": 200, "replicates": 199}
    cfg_path = tmp_path / "cfg.json"
    cfg_path.write_text(json.dumps(cfg))
    out_dir = tmp_path / "res"
    code = main(["level", "--config", str(cfg_path), "--seed", "3",
                 "--out", str(out_dir), "--format", "both", "--check"])
    assert code == 0
    captured = capsys.readouterr().out.strip().splitlines()
    assert any(p.endswith("level.csv") for p in captured)
    assert any(p.endswith("level.json") for p in captured)
    csv_text = (out_dir / "level.csv").read_text()
    assert csv_text.splitlines()[0].startswith("n,alpha,gamma,beta,s,R,d,L,epsilon,rate,se")


def test_bad_config_exit_code(tmp_path):
    cfg_path = tmp_path / "bad.json"
    cfg_path.write_text(json.dumps({"ns": [40], "alphas": [1.0], "trials": 3}))
    assert main(["level", "--config", str(cfg_path), "--out", str(tmp_path)]) == EXIT_CONFIG


def test_check_failure_exit_code(tmp_path):
    # rate regression with a hopeless budget cannot bracket: --check exits 3
    cfg = {"ns": [100, 120, 140, 160], "alphas": [0.01], "gammas": [0.25],
           "beta": 0.1, "trials": 100, "replicates": 99, "probe_trials": 100,
           "bisect_iters": 3}
    cfg_path = tmp_path / "cfg.json"
    cfg_path.write_text(json.dumps(cfg))
    code = main(["rate", "--config", str(cfg_path), "--seed", "1",
                 "--out", str(tmp_path / "r"), "--check"])
    assert code == EXIT_CHECK


def test_workers_env_round_trip(tmp_path, monkeypatch):
    monkeypatch.setenv("LDPGOF_WORKERS", "2")
    cfg = {"ns": [30], "alphas": [1.0], "gammas": [0.1], "levels": [2],
           "trials": 120, "replicates": 99}
    cfg_path = tmp_path / "cfg.json"
    cfg_path.write_text(json.dumps(cfg))
    assert main(["level", "--config", str(cfg_path), "--out", str(tmp_path / "o")]) == 0
