import json

import numpy as np
import pytest

from jetflow import cli
from jetflow.errors import ConfigError
from jetflow.scheme import Knobs
from jetflow.snapshots import read_snapshot
from jetflow.sweeps import gnuplot_script, knob_exponents, predicted_slope, run_sweep, sweep_csv
from jetflow.verify import operator_suite

BASE = Knobs(2, 8, 8, 64, 64)


def test_predicted_slopes():
    assert predicted_slope("W", "mu", 2.0) == 0.0
    assert predicted_slope("Wc", "nu", 1.5) == pytest.approx(1 + 0.5 - 1 / 1.5)
    # nu tied to mu^0.9 adds 0.9 times the nu exponent
    assert predicted_slope("W", "mu", 1.0, nu_power=0.9) == pytest.approx(-0.5 - 0.9 * 0.5)
    assert knob_exponents("const", 1.5) == {}
    with pytest.raises(ConfigError):
        knob_exponents("nope", 1.5)


def test_sweep_rejects_short_or_bad_axis():
    with pytest.raises(ConfigError):
        run_sweep("W", "mu", [16, 32], BASE, 1.5)
    with pytest.raises(ConfigError):
        run_sweep("W", "lambda", [16, 32, 64], BASE, 1.5)


def test_exceptional_measure_sweep_and_outputs():
    res = run_sweep("E", "kappa", [8, 16, 32], BASE, 1.5)
    assert res.fit.slope == pytest.approx(-1.0, abs=1e-9)
    csv = sweep_csv([res]).splitlines()
    assert csv[0] == "quantity,axis,value,measured" and len(csv) == 4
    assert "slope -1.000" in gnuplot_script("s.csv", [res])


def test_operator_suite_small():
    out = operator_suite(n=32, count=5, seed=3)
    assert max(out.values()) <= 1e-12


def test_settings_precedence(tmp_path, monkeypatch):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("# comment\ngamma = 0.02\np = 1.4\ngrid = 128\n")
    monkeypatch.setenv("JETFLOW_P", "1.6")
    args = cli.build_parser().parse_args(["check-params", "--config", str(cfg), "--grid", "64"])
    s = cli.resolve(args)
    assert s["gamma"] == "0.02"
    assert s["p"] == "1.6"
    assert s["grid"] == "64"
    assert s["r"] == cli.DEFAULTS["r"]


def test_config_errors(tmp_path, capsys):
    assert cli.main(["check-params", "--config", str(tmp_path / "missing.cfg")]) == 2
    bad = tmp_path / "bad.cfg"
    bad.write_text("wobble = 3\n")
    assert cli.main(["check-params", "--config", str(bad)]) == 2
    assert cli.main(["check-params", "--p", "abc"]) == 2
    assert "error" in capsys.readouterr().err


def test_check_params_exit_codes(capsys):
    assert cli.main(["check-params"]) == 0
    assert cli.main(["check-params", "--r", "1.01"]) == 1
    assert "osc_error" in capsys.readouterr().out
    assert cli.main(["check-params", "--p", "2.0"]) == 2


def test_iterate_rejects_unresolvable_grid(tmp_path, capsys):
    assert cli.main(["iterate", "--grid", "32", "--out", str(tmp_path)]) == 2
    assert "grid cannot resolve" in capsys.readouterr().err


def test_iterate_reports_failing_component(tmp_path, capsys):
    # 64^2 truncates the jets too hard for the end-to-end residual
    assert cli.main(["iterate", "--grid", "64", "--out", str(tmp_path)]) == 1
    assert "component 'nsr'" in capsys.readouterr().err
    fail = json.loads((tmp_path / "failure.json").read_text())
    assert fail["component"] == "nsr" and fail["residual"] > fail["tolerance"]


def test_iterate_writes_outputs(tmp_path):
    out = tmp_path / "run"
    code = cli.main(["iterate", "--grid", "256", "--out", str(out), "--snapshots", "1",
                     "--threads", "2"])
    assert code == 0
    rep = json.loads((out / "report.json").read_text())
    assert rep["residuals"]["nsr"] <= 1e-5
    assert (out / "slices.csv").read_text().startswith("t,")
    E = json.loads((out / "exceptional_set.json").read_text())
    assert all(b > a for a, b in E)
    vals, head = read_snapshot(out / "u1_t0.5000.bin")
    assert vals.shape == (2, 256, 256) and head["time"] == 0.5
    assert "plot" in (out / "plot_slices.gp").read_text()


def test_init_command(tmp_path):
    code = cli.main(["init", "--grid", "64", "--k-max", "15", "--out", str(tmp_path), "--snapshots", "2"])
    assert code == 0
    rep = json.loads((tmp_path / "init_report.json").read_text())
    assert rep["nsr_relative"] <= 1e-8 and rep["energy_monotone"]
    assert cli.main(["init", "--grid", "32", "--k-max", "15", "--out", str(tmp_path)]) == 2


def test_sweep_command(tmp_path):
    code = cli.main(["sweep", "--sweep-quantity", "g", "--sweep-axis", "kappa",
                     "--sweep-values", "8,16,32", "--out", str(tmp_path)])
    assert code == 0
    fit = json.loads((tmp_path / "sweep_fit.json").read_text())
    assert abs(fit["deviation"]) <= 0.1
    assert np.isfinite(fit["fit"]["r2"])
    assert cli.main(["sweep", "--sweep-values", "8,16", "--out", str(tmp_path)]) == 2


def test_verify_ops_command(capsys):
    assert cli.main(["verify-ops", "--count", "5", "--grid", "32"]) == 0
    assert "leray_idempotent" in capsys.readouterr().out
