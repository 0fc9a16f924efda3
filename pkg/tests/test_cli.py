import json
import re
import subprocess
import sys

import numpy as np
import pytest

from sanova.cli import main
from sanova.io import read_draws

FAST = ["--n-chains", "3", "--n-iter", "1500", "--burn-in", "500"]
MN20 = ["--data", "mn20_counts.csv", "--adjacency", "mn20.adj"]


def test_check_design(capsys):
    assert main(["check-design", "--adjacency", "mn20.adj", "--contrasts", "HA1"]) == 0
    out = capsys.readouterr().out
    assert "block widths 1/2/19/38" in out
    resid = float(re.search(r"residual (\S+)", out).group(1))
    assert resid < 1e-10


def test_check_design_without_interactions(capsys):
    assert main(["check-design", "--adjacency", "mn20.adj", "--no-interactions"]) == 0
    assert "block widths 1/2/19\n" in capsys.readouterr().out


def test_fit_requires_seed(tmp_path, capsys):
    assert main(["fit-sanova", *MN20, "--out", str(tmp_path)]) == 2
    assert "--seed" in capsys.readouterr().err


def test_fit_sanova_outputs_and_convergence(tmp_path):
    assert main(["fit-sanova", *MN20, "--contrasts", "HA1", "--seed", "7", "--out", str(tmp_path), *FAST]) == 0
    header, rows = read_draws(tmp_path / "draws" / "sanova.csv")
    assert header[:2] == ["chain", "iter"] and header[-1] == "loglik"
    assert rows.shape == (3000, len(header))
    summary = (tmp_path / "summary" / "sanova.csv").read_text().splitlines()
    rhat = np.array([float(line.split(",")[-1]) for line in summary[1:]])
    assert rhat.max() < 1.1
    manifest = json.loads((tmp_path / "manifest.json").read_text())
    assert manifest["seed"] == 7
    assert all(len(v) == 64 for v in manifest["inputs"].values())


def test_config_file_with_flag_override(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("seed = 3\nn_chains = 2\nn_iter = 300\nburn_in = 100\nwishart = 200\n")
    out = tmp_path / "o"
    assert main(["fit-mcar", "--config", str(cfg), *MN20, "--n-iter", "400", "--out", str(out)]) == 0
    _, rows = read_draws(out / "draws" / "mcar.csv")
    assert rows.shape[0] == 2 * 300
    m = json.loads((out / "manifest.json").read_text())
    assert m["config"]["wishart"] == "200"
    assert m["config"]["run"]["n_iter"] == 400


def test_fit_car_and_dic(tmp_path, capsys):
    args = ["fit-car", *MN20, "--disease", "larynx", "--seed", "1", "--out", str(tmp_path), *FAST]
    assert main(args) == 0
    draws = tmp_path / "draws" / "car_larynx.csv"
    assert draws.exists()
    capsys.readouterr()
    # a one-disease fit does not match the three-disease data
    assert main(["dic", "--draws", str(draws), *MN20]) == 2


def test_dic_command(tmp_path, capsys):
    assert main(["fit-sanova", *MN20, "--seed", "2", "--out", str(tmp_path), *FAST]) == 0
    capsys.readouterr()
    assert main(["dic", "--draws", str(tmp_path / "draws" / "sanova.csv"), *MN20]) == 0
    line = capsys.readouterr().out.splitlines()[1].split()
    dbar, pd, value = map(float, line[1:])
    assert value == pytest.approx(dbar + pd, abs=0.11)
    assert pd > 0


def test_metrics_command(tmp_path, capsys):
    t = np.zeros((3, 4))
    e = t + np.sqrt([[0.1], [0.2], [0.3]])
    for name, arr in (("e", e), ("t", t), ("lo", e - 1), ("hi", e + 1)):
        np.savetxt(tmp_path / f"{name}.csv", arr, delimiter=",")
    p = {k: str(tmp_path / f"{k}.csv") for k in ("e", "t", "lo", "hi")}
    assert main(["metrics", "--estimates", p["e"], "--truths", p["t"], "--lower", p["lo"], "--upper", p["hi"]]) == 0
    out = capsys.readouterr().out
    assert "amse 0.2 " in out and "pi_rate 1" in out


def test_errors_exit_nonzero(tmp_path, capsys):
    assert main(["fit-sanova", "--data", "nope.csv", "--adjacency", "mn20.adj", "--seed", "1"]) == 1
    assert main(["fit-sanova", *MN20, "--seed", "1", "--contrasts", "HA9"]) == 1
    with pytest.raises(SystemExit) as exc:
        main(["fit-everything"])
    assert exc.value.code != 0


def test_simulate_small(tmp_path, capsys):
    args = ["simulate", "--cells", "Data5", "--methods", "SANOVA-HA1", "--subjects", "3", "--seed", "1"]
    assert main([*args, "--out", str(tmp_path)]) == 0
    rows = (tmp_path / "metrics" / "metrics.csv").read_text().splitlines()
    assert rows[1].startswith("Data5,SANOVA-HA1,")
    assert (tmp_path / "metrics" / "amse.txt").exists()


def test_simulate_data1_amse(tmp_path, capsys):
    args = ["simulate", "--cells", "Data1", "--methods", "SANOVA-HA1", "--subjects", "100", "--seed", "1"]
    assert main([*args, "--out", str(tmp_path)]) == 0
    row = (tmp_path / "metrics" / "metrics.csv").read_text().splitlines()[1].split(",")
    a, se = float(row[2]), float(row[3])
    assert abs(a - 0.34) < 3 * max(se, 0.07)


def test_console_entry_point():
    r = subprocess.run([sys.executable, "-m", "sanova.cli", "--version"], capture_output=True, text=True)
    assert r.returncode == 0 and r.stdout.strip()
