import csv
import json
import math

import numpy as np
import pytest
from click.testing import CliRunner

from cvqnd.cli import cli


def invoke(*args):
    result = CliRunner().invoke(cli, [str(a) for a in args])
    return result


def read_csv(path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    return rows[0], np.array(rows[1:], dtype=float) if len(rows) > 1 else np.empty((0, len(rows[0])))


@pytest.fixture
def small_verify(tmp_path):
    cfg = {
        "verify": {
            "inputs": [{"kind": "vacuum"}, {"kind": "fock", "n": 1}],
            "q_values": [0.5, 0.9],
            "xm_values": [0.0, 0.7],
        }
    }
    path = tmp_path / "verify.json"
    path.write_text(json.dumps(cfg))
    return path


def test_verify_pass(tmp_path, small_verify):
    res = invoke("verify", "--config", small_verify, "--out", tmp_path / "v")
    assert res.exit_code == 0, res.output
    with open(tmp_path / "v" / "residuals.csv", newline="") as fh:
        header, *rows = list(csv.reader(fh))
    assert len(rows) == 8 and rows[0][0] == "vacuum"
    assert header == ["input_label", "q", "x_m", "r7", "r11", "r12", "n_points"]
    summary = json.loads((tmp_path / "v" / "summary.json").read_text())
    assert summary["pass"] is True and summary["max_residual"] < 1e-4
    assert summary["n_cases"] == 8


def test_verify_coarse_grid_fails(tmp_path, small_verify):
    res = invoke("verify", "--config", small_verify, "--out", tmp_path / "v", "--n-points", 64)
    assert res.exit_code == 1
    text = (tmp_path / "v" / "residuals.csv").read_text().splitlines()
    assert len(text) == 9 and text[1].endswith(",64")
    assert json.loads((tmp_path / "v" / "summary.json").read_text())["pass"] is False


def test_verify_single_case_flags(tmp_path, small_verify):
    res = invoke("verify", "--config", small_verify, "--out", tmp_path, "--q", 0.6, "--xm", 0.5)
    assert res.exit_code == 0
    assert json.loads((tmp_path / "summary.json").read_text())["n_cases"] == 2


@pytest.mark.parametrize(
    "content",
    ['{"verify": {"bogus": 1}}', '{"q": 1.5}', "{not json", '{"grid": {"x_max": 8, "n_points": 4}}', "[1, 2]"],
)
def test_malformed_config_exit_2(tmp_path, content):
    path = tmp_path / "bad.json"
    path.write_text(content)
    assert invoke("verify", "--config", path, "--out", tmp_path).exit_code == 2


def test_bad_q_flag_exit_2(tmp_path):
    assert invoke("run", "--q", 1.2, "--out", tmp_path).exit_code == 2
    assert invoke("verify", "--q", 0.0, "--out", tmp_path).exit_code == 2


def test_run_vacuum(tmp_path):
    res = invoke("run", "--out", tmp_path, "--distribution")
    assert res.exit_code == 0, res.output
    report = json.loads((tmp_path / "moments.json").read_text())
    assert report["mean_x"] == pytest.approx(0.5, abs=1e-4)
    assert report["var_x"] == pytest.approx(report["gaussian_oracle"]["var_x"], abs=1e-4)
    assert report["distribution_integral"] == pytest.approx(1.0, abs=1e-5)
    header, data = read_csv(tmp_path / "state_out.csv")
    assert header == ["x", "re_psi", "im_psi", "abs2_psi"]
    assert data.shape == (1024, 4)
    header, dist = read_csv(tmp_path / "distribution.csv")
    assert header == ["x_m", "p_kraus", "p_meter"]
    assert np.trapezoid(dist[:, 1], dist[:, 0]) == pytest.approx(1.0, abs=1e-5)


def test_run_wigner_fock1(tmp_path):
    cfg = tmp_path / "fock.json"
    cfg.write_text(json.dumps({"input": {"kind": "fock", "n": 1}, "run": {"wigner_points": 41}}))
    res = invoke("run", "--config", cfg, "--out", tmp_path, "--wigner", "--q", 0.6, "--xm", 0.3)
    assert res.exit_code == 0, res.output
    header, w = read_csv(tmp_path / "wigner_input.csv")
    assert header == ["x", "p", "W"]
    origin = w[(w[:, 0] == 0) & (w[:, 1] == 0), 2]
    assert origin[0] == pytest.approx(-2 / math.pi, abs=1e-3)
    assert (tmp_path / "wigner_output.csv").exists()


def test_ensemble_requires_seed(tmp_path):
    res = invoke("ensemble", "--out", tmp_path, "--n-trajectories", 0)
    assert res.exit_code == 2
    assert "seed" in res.output


def test_ensemble_exact_backaction(tmp_path):
    res = invoke("ensemble", "--out", tmp_path, "--seed", 1, "--n-trajectories", 0, "--q", 0.6, "--n-points", 1024)
    assert res.exit_code == 0, res.output
    stats = json.loads((tmp_path / "stats.json").read_text())
    dx = 0.6 / (2 * math.sqrt(1 - 0.36))
    assert stats["nonselective_var_p"]["value"] == pytest.approx(0.25 + 1 / (16 * dx * dx), abs=1e-3)
    assert not (tmp_path / "trajectories.csv").exists()
    header, _ = read_csv(tmp_path / "marginal.csv")
    assert header == ["x", "nonselective", "input"]


def test_ensemble_byte_identical(tmp_path):
    cfg = tmp_path / "ens.json"
    cfg.write_text(json.dumps({"input": {"kind": "coherent", "x0": 0.5}, "ensemble": {"n_trajectories": 30}}))
    outs = []
    for k in range(2):
        res = invoke("ensemble", "--config", cfg, "--out", tmp_path / str(k), "--seed", 42, "--q", 0.5, "--n-points", 1024)
        assert res.exit_code == 0, res.output
        outs.append({f: (tmp_path / str(k) / f).read_bytes() for f in ("stats.json", "trajectories.csv", "marginal.csv")})
    assert outs[0] == outs[1]
    header, traj = read_csv(tmp_path / "0" / "trajectories.csv")
    assert header[:4] == ["trajectory", "x_m", "mean_x_out", "mean_p_out"]
    assert traj.shape[0] == 30


def test_bench(tmp_path, small_verify):
    res = invoke("bench", "--config", small_verify, "--out", tmp_path, "--n-points", 512)
    assert res.exit_code == 0, res.output
    header, data = read_csv(tmp_path / "bench.csv")
    assert header[0] == "n_points" and data[0, 0] == 512


def test_main_entry_point(tmp_path, small_verify):
    from cvqnd.cli import main

    with pytest.raises(SystemExit) as exc:
        main(["verify", "--config", str(small_verify), "--out", str(tmp_path)])
    assert exc.value.code == 0
