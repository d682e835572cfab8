import json

import pandas as pd
import pytest

from app import main, resolve_threads
from data_manager import ConfigError


def _simulate(out, seed=1):
    return main(["simulate", "--n", "20", "--p", "0.3", "--xi", "0.5", "--samples", "300",
                 "--seed", str(seed), "--out", str(out)])


def test_predict_prints_closed_forms(capsys):
    code = main(["predict", "--estimator", "granger", "--rho", "0.99", "--p", "0.1", "--xi", "0.6"])
    assert code == 0
    out = capsys.readouterr().out.splitlines()
    assert "gamma=0.99" in out
    eta = float(next(line for line in out if line.startswith("eta=")).split("=")[1])
    assert eta == pytest.approx(0.063839, abs=1e-6)


def test_simulate_is_reproducible(tmp_path):
    assert _simulate(tmp_path / "a") == 0
    assert _simulate(tmp_path / "b") == 0
    for name in ("graph.json", "combination.json", "block.csv", "block.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    meta = json.loads((tmp_path / "a" / "block.json").read_text())
    assert meta["seed"] == 1 and len(meta["s_indices"]) == 10


def test_estimate_twice_gives_identical_files(tmp_path):
    _simulate(tmp_path / "sim")
    block = str(tmp_path / "sim" / "block.csv")
    for out in ("one", "two"):
        assert main(["estimate", "--block", block, "--out", str(tmp_path / out)]) == 0
    for name in ("correlation.json", "estimate.json", "recovered_graph.json"):
        assert (tmp_path / "one" / name).read_bytes() == (tmp_path / "two" / name).read_bytes()
    recovered = json.loads((tmp_path / "one" / "recovered_graph.json").read_text())
    assert recovered["n"] == 10 and len(recovered["s_indices"]) == 10


def test_missing_config_is_a_usage_error(tmp_path, capsys):
    assert main(["experiment", "--config", str(tmp_path / "missing.json")]) == 2
    assert "not found" in capsys.readouterr().err


def test_unknown_flag():
    assert main(["simulate", "--frobnicate"]) == 2


def test_unknown_config_key(tmp_path):
    path = tmp_path / "sim.json"
    path.write_text('{"n": 20, "colour": "red"}')
    assert main(["simulate", "--config", str(path), "--out", str(tmp_path)]) == 2


def test_experiment_from_config(tmp_path):
    config = {
        "name": "tiny",
        "regime": {"kind": "dense", "p": 0.2},
        "policy": {"kind": "laplacian", "rho": 0.99, "lam": 0.9},
        "xi": 0.9,
        "n_sweep": [30],
        "estimators": [{"kind": "granger", "source": "exact"}, {"kind": "residual"}],
        "mc_runs": 5,
    }
    path = tmp_path / "tiny.json"
    path.write_text(json.dumps(config))
    out = tmp_path / "out"
    assert main(["experiment", "--config", str(path), "--mc-runs", "2", "--out", str(out)]) == 0
    table = pd.read_csv(out / "tiny.csv")
    assert table["estimator"].tolist() == ["granger", "residual"]
    assert (table["mc_runs"] == 2).all()
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["config"]["mc_runs"] == 2


def test_margins_subcommand(tmp_path, capsys):
    config = {"regime": {"kind": "dense", "p": 0.2}, "policy": {"kind": "metropolis", "rho": 0.99},
              "xi": 0.5, "n_sweep": [30], "estimators": [{"kind": "granger"}]}
    path = tmp_path / "m.json"
    path.write_text(json.dumps(config))
    assert main(["margins", "--config", str(path), "--out", str(tmp_path)]) == 0
    table = pd.read_csv(tmp_path / "margins_granger_exact_N30.csv")
    assert len(table) == 15 * 14
    assert "eta_plus_gamma=" in capsys.readouterr().out


class TestThreads:
    def test_precedence(self, monkeypatch):
        monkeypatch.setenv("NETTOMO_THREADS", "3")
        assert resolve_threads(5, 2) == 5
        assert resolve_threads(None, 2) == 3
        monkeypatch.delenv("NETTOMO_THREADS")
        assert resolve_threads(None, 2) == 2
        assert resolve_threads(None) == 1

    @pytest.mark.parametrize("value", ["zero", "0"])
    def test_bad_environment_value(self, monkeypatch, value):
        monkeypatch.setenv("NETTOMO_THREADS", value)
        with pytest.raises(ConfigError):
            resolve_threads(None)
