import json

import numpy as np

from dcadmm.cli import main
from dcadmm.experiment import load_config


def test_generate(tmp_path, capsys):
    out = tmp_path / "gen"
    assert main(["generate", "--seed", "5", "--out", str(out)]) == 0
    info = json.loads(capsys.readouterr().out)
    assert info["n"] == 10
    assert load_config(out / "config.json").seed == 5
    data = np.load(out / "instance.npz")
    assert data["A_0"].shape == (20, 15) and data["x_star"].shape == (15,)
    assert (out / "graph.txt").exists() and (out / "weights.csv").exists()


def test_generate_logistic(tmp_path, capsys):
    out = tmp_path / "gen"
    assert main(["generate", "--scenario", "logistic_l1", "--out", str(out)]) == 0
    assert "features_0" in np.load(out / "instance.npz")


def test_run_export_report(tmp_path, capsys):
    cfg = _write_config(tmp_path)
    out = tmp_path / "run"
    assert main(["run", "--config", str(cfg), "--out", str(out), "--trials", "1"]) == 0
    assert "series" in capsys.readouterr().out
    assert main(["export", str(out)]) == 0
    assert (out / "plot_data.csv").exists()
    assert main(["report", str(out), "--tol", "1e-4"]) == 0
    assert "k@0.0001" in capsys.readouterr().out


def _write_config(tmp_path):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps({
        "config_version": 1, "n": 4, "p": 3, "samples": 8, "graph_p": 0.6, "max_iterations": 15,
        "algorithms": ["DC-DistADMM", "DGD"], "baseline_steps": {"DGD": 0.005},
    }))
    return path


def test_errors_return_2(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"config_version": 1, "bogus": 1}))
    assert main(["run", "--config", str(bad)]) == 2
    assert main(["export", str(tmp_path)]) == 2
    assert "error" in capsys.readouterr().err
