import json

import numpy as np
import pytest

from signflow.cli import main

FIGURE_A = {
    "coefficient": "legendre",
    "solver": {"n": 128, "dt": 1e-5, "snapshot_stride": 50},
    "initial": {"datum": {"zeros": [-0.3, 0.4], "leading_sign": 1, "rho": 0.3}},
    "target": {"datum": {"zeros": [0.1, 0.5], "leading_sign": 1, "rho": 0.3}},
    "steering": {"epsilon": 0.02, "eta_rel": 0.05, "N_max": 5},
}


def write_config(tmp_path, name, cfg):
    path = tmp_path / f"{name}.json"
    path.write_text(json.dumps(cfg))
    return str(path)


def numeric_summary(path):
    data = json.loads(path.read_text())
    data.pop("timing")
    return data


def test_eigen_writes_legendre_spectrum(tmp_path):
    cfg = write_config(tmp_path, "eig", {"coefficient": "legendre", "solver": {"n": 512}, "eigen": {"m": 6, "modes": [1, 2]}})
    out = tmp_path / "out"
    assert main(["eigen", "--config", cfg, "--out", str(out)]) == 0
    rows = [r.split(",") for r in (out / "eigen.csv").read_text().splitlines()[1:]]
    assert [int(p) for p, _ in rows] == [1, 2, 3, 4, 5, 6]
    np.testing.assert_allclose([float(v) for _, v in rows], [0, 2, 6, 12, 20, 30], rtol=1e-2, atol=1e-2)
    assert (out / "mode_2.csv").read_text().startswith("x,mode\n")
    assert json.loads((out / "summary.json").read_text())["status"] == "success"


def test_evolve_zero_data_gives_zero_column(tmp_path):
    cfg = write_config(tmp_path, "ev", {"initial": {"named": "zero"}, "solver": {"n": 32, "T": 0.01, "dt": 1e-3}, "control": 4.0})
    out = tmp_path / "out"
    assert main(["evolve", "--config", cfg, "--out", str(out)]) == 0
    lines = (out / "trajectory.csv").read_text().splitlines()
    assert lines[0] == "t,x,u"
    assert {row.split(",")[2] for row in lines[1:]} == {"0.0"}
    assert (out / "traces.csv").read_text() == "l,t,xi,status\n"


def test_environment_overrides_output(tmp_path, monkeypatch):
    cfg = write_config(tmp_path, "ev", {"initial": {"named": "zero"}, "solver": {"n": 16, "T": 0.001, "dt": 1e-3}, "output": str(tmp_path / "ignored")})
    monkeypatch.setenv("SIGNFLOW_OUT", str(tmp_path / "env"))
    assert main(["evolve", "--config", cfg]) == 0
    assert (tmp_path / "env" / "summary.json").exists() and not (tmp_path / "ignored").exists()


@pytest.mark.parametrize(
    "cfg",
    [
        {"coefficient": "legendre", "boundary": {"robin": [1, 0, 1, 0]}, "initial": {"named": "zero"}},
        {"coefficient": "sqrt", "boundary": "weighted_neumann", "initial": {"named": "zero"}},
        {"coefficient": "cubic", "initial": {"named": "zero"}},
        {"initial": {"named": "zero"}, "solver": {"n": 2}},
        {"initial": {"named": "zero"}, "solver": {"dt": -1}},
        {"initial": {"datum": {"zeros": [0.0, 0.01], "rho": 0.3}}},
        {"solver": {"n": 32}},
        {"initial": {"named": "zero"}, "nonlinearity": {"ebm": {"model": "budyko", "Q": 1, "a_i": 0.7, "a_f": 0.3, "A": 0, "B": 1}}},
    ],
)
def test_config_errors_exit_one_without_artifacts(tmp_path, capsys, cfg):
    path = write_config(tmp_path, "bad", cfg)
    out = tmp_path / "out"
    assert main(["evolve", "--config", path, "--out", str(out)]) == 1
    err = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
    assert err["error"] == "config" and err["message"]
    assert not out.exists()


def test_unreadable_config(tmp_path, capsys):
    assert main(["eigen", "--config", str(tmp_path / "missing.json"), "--out", str(tmp_path / "o")]) == 1
    assert json.loads(capsys.readouterr().err)["error"] == "config"


def test_steer_rejects_mismatched_orders_as_config_error(tmp_path):
    cfg = dict(FIGURE_A, target={"datum": {"zeros": [0.1, 0.5], "leading_sign": -1, "rho": 0.3}})
    assert main(["steer", "--config", write_config(tmp_path, "st", cfg), "--out", str(tmp_path / "o")]) == 1
    assert not (tmp_path / "o").exists()


def test_steer_failure_exits_two_with_summary(tmp_path, capsys):
    out = tmp_path / "out"
    assert main(["steer", "--config", write_config(tmp_path, "st", FIGURE_A), "--out", str(out)]) == 2
    summary = json.loads((out / "summary.json").read_text())
    assert summary["status"] == "failure" and summary["message"]
    assert summary["command"] == "steer" and "wallclock_s" in summary["timing"]


def test_steer_success_on_identical_target(tmp_path):
    cfg = dict(FIGURE_A, target=FIGURE_A["initial"])
    out = tmp_path / "out"
    assert main(["steer", "--config", write_config(tmp_path, "st", cfg), "--out", str(out)]) == 0
    summary = json.loads((out / "summary.json").read_text())
    assert summary["status"] == "success" and summary["final_error"] <= summary["eta"]
    assert (out / "trajectory.csv").exists() and (out / "traces.csv").exists()


def test_repeated_runs_are_identical(tmp_path):
    cfg = write_config(tmp_path, "st", FIGURE_A)
    for run in ("a", "b"):
        assert main(["steer", "--config", cfg, "--out", str(tmp_path / run)]) == 2
    assert numeric_summary(tmp_path / "a" / "summary.json") == numeric_summary(tmp_path / "b" / "summary.json")
    assert (tmp_path / "a" / "traces.csv").read_bytes() == (tmp_path / "b" / "traces.csv").read_bytes()


def test_random_datum_follows_seed(tmp_path):
    base = {"initial": {"datum": {"random": 2}}, "solver": {"n": 64, "T": 0.001, "dt": 1e-4}}
    for name, seed in (("a", 3), ("b", 3), ("c", 4)):
        path = write_config(tmp_path, name, dict(base, seed=seed))
        assert main(["evolve", "--config", path, "--out", str(tmp_path / name)]) == 0
    first = (tmp_path / "a" / "trajectory.csv").read_bytes()
    assert first == (tmp_path / "b" / "trajectory.csv").read_bytes()
    assert first != (tmp_path / "c" / "trajectory.csv").read_bytes()


def test_suite_runs_every_config(tmp_path, capsys):
    suite = tmp_path / "suite"
    suite.mkdir()
    (suite / "eig.json").write_text(json.dumps({"command": "eigen", "solver": {"n": 64}}))
    (suite / "ev.json").write_text(json.dumps({"command": "evolve", "initial": {"named": "cosine"}, "solver": {"n": 32, "T": 0.001, "dt": 1e-4}}))
    out = tmp_path / "out"
    assert main(["suite", "--dir", str(suite), "--out", str(out), "--jobs", "2"]) == 0
    assert (out / "eig" / "eigen.csv").exists() and (out / "ev" / "trajectory.csv").exists()
    reports = [json.loads(line) for line in capsys.readouterr().out.splitlines()]
    assert sorted(r["status"] for r in reports) == [0, 0]


def test_suite_requires_command(tmp_path):
    suite = tmp_path / "suite"
    suite.mkdir()
    (suite / "x.json").write_text(json.dumps({"solver": {"n": 64}}))
    assert main(["suite", "--dir", str(suite), "--out", str(tmp_path / "o")]) == 1
