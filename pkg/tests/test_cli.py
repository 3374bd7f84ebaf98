import json

import numpy as np
import pytest
from typer.testing import CliRunner

from bipho import __version__
from bipho.cli import EXIT_CONFIG, EXIT_RUNTIME, EXIT_VERIFY, app, run_cli
from bipho.correlation import analytic_sigma0

runner = CliRunner()

SMALL = """\
grid:
  n_pos: 16
  omega_max: 0.12
  calibrate_to_hz: null
ensemble:
  n_realizations: 300
  sigma_list: [0, 1]
tau:
  min: -200
  max: 200
  step: 5
"""

FIT_GRID = """\
grid:
  n_pos: 64
  omega_max: 0.2
  calibrate_to_hz: null
ensemble:
  sigma_list: [0]
  n_realizations: 1
tau:
  min: -200
  max: 200
  step: 1
"""


@pytest.fixture()
def small_cfg(tmp_path):
    p = tmp_path / "small.yaml"
    p.write_text(SMALL)
    return p


def _simulate(cfg, out, *extra):
    return runner.invoke(app, ["simulate", "-c", str(cfg), "-o", str(out), *extra])


def test_version():
    result = runner.invoke(app, ["--version"])
    assert result.exit_code == 0
    assert __version__ in result.output


def test_no_command_prints_help():
    result = runner.invoke(app, [])
    assert result.exit_code == 0
    assert "simulate" in result.output


def test_simulate_writes_traces(tmp_path, small_cfg):
    out = tmp_path / "run"
    result = _simulate(small_cfg, out)
    assert result.exit_code == 0, result.output
    for s in ("0.0", "1.0"):
        assert (out / "traces" / f"trace_sigma_{s}.csv").exists()
        assert (out / "traces" / f"trace_sigma_{s}.json").exists()
        assert (out / "traces" / f"expected_sigma_{s}.csv").exists()
    resolved = json.loads((out / "resolved_config.json").read_text())
    assert resolved["ensemble"]["sigma_list"] == [0.0, 1.0]


def test_simulate_default_sigma_list(tmp_path):
    cfg = tmp_path / "c.yaml"
    cfg.write_text(SMALL.replace("  sigma_list: [0, 1]\n", ""))
    out = tmp_path / "run"
    assert _simulate(cfg, out, "-n", "20").exit_code == 0
    assert len(list((out / "traces").glob("trace_sigma_*.csv"))) == 5


def test_simulate_is_deterministic_across_workers(tmp_path, small_cfg):
    a, b = tmp_path / "a", tmp_path / "b"
    assert _simulate(small_cfg, a, "--seed", "42", "-w", "1").exit_code == 0
    assert _simulate(small_cfg, b, "--seed", "42", "-w", "4").exit_code == 0
    for f in sorted((a / "traces").iterdir()):
        assert f.read_bytes() == (b / "traces" / f.name).read_bytes()
    ra = json.loads((a / "resolved_config.json").read_text())
    rb = json.loads((b / "resolved_config.json").read_text())
    ra.pop("output"), rb.pop("output")
    assert ra == rb


def test_seed_from_environment(tmp_path, small_cfg):
    out = tmp_path / "run"
    result = runner.invoke(app, ["simulate", "-c", str(small_cfg), "-o", str(out)], env={"BIPHO_SEED": "17"})
    assert result.exit_code == 0, result.output
    side = json.loads((out / "traces" / "trace_sigma_1.0.json").read_text())
    assert side["meta"]["seed"] == 17


def test_simulate_poisson(tmp_path):
    cfg = tmp_path / "noisy.yaml"
    cfg.write_text(SMALL + "noise:\n  poisson: true\n  n_acquisitions: 10\n")
    out = tmp_path / "run"
    assert _simulate(cfg, out).exit_code == 0
    side = json.loads((out / "traces" / "trace_sigma_1.0.json").read_text())
    assert side["meta"]["kind"] == "measured-sim"


def test_bad_tau_step_is_a_config_error(tmp_path, small_cfg):
    result = _simulate(small_cfg, tmp_path / "run", "--tau-step", "0")
    assert result.exit_code == EXIT_CONFIG


def test_unknown_key_is_a_config_error(tmp_path):
    cfg = tmp_path / "c.yaml"
    cfg.write_text("ensemble:\n  n_realisations: 3\n")
    result = _simulate(cfg, tmp_path / "run")
    assert result.exit_code == EXIT_CONFIG
    assert "line 2" in result.output


def test_bad_workers(tmp_path, small_cfg):
    assert _simulate(small_cfg, tmp_path / "run", "-w", "0").exit_code == EXIT_CONFIG


def test_sweep_writes_curves(tmp_path, small_cfg):
    out = tmp_path / "run"
    result = runner.invoke(
        app, ["sweep", "-c", str(small_cfg), "-o", str(out), "--sigma", "0,0.5,1", "-n", "100"]
    )
    assert result.exit_code == 0, result.output
    for name in ("fraction_entangled", "fraction_classical", "background", "peak_ratio"):
        assert (out / "curves" / f"{name}.csv").exists()
    lines = (out / "curves" / "correlation_map.csv").read_text().splitlines()
    assert lines[0] == "sigma_rad,tau_fs,value_hz,stderr_hz"
    assert len(lines) == 1 + 3 * 81
    assert json.loads((out / "curves" / "correlation_map.json").read_text())["shape"] == [3, 81]
    assert "crosses 0.5 at sigma=0.8" in result.output
    resolved = json.loads((out / "resolved_config.json").read_text())
    assert resolved["sweep"]["n_realizations"] == 100


def test_sweep_rejects_negative_sigma(tmp_path, small_cfg):
    result = runner.invoke(app, ["sweep", "-c", str(small_cfg), "-o", str(tmp_path), "--sigma", "0,-1"])
    assert result.exit_code == EXIT_CONFIG


def test_simulate_then_fit(tmp_path):
    cfg = tmp_path / "fit.yaml"
    cfg.write_text(FIT_GRID)
    out = tmp_path / "run"
    assert _simulate(cfg, out).exit_code == 0

    result = runner.invoke(app, ["fit", str(out), "-o", str(out)])
    assert result.exit_code == 0, result.output
    res = json.loads((out / "fit" / "fit_result.json").read_text())
    assert res["model"] == "intensity"
    assert res["B_hz"] == pytest.approx(708.71, rel=0.01)
    assert res["mu_rad_per_fs"] == pytest.approx(0.0275, rel=0.01)
    assert res["sigma_p_rad_per_fs"] == pytest.approx(0.022, rel=0.01)
    assert res["spectral_width_nm"] == pytest.approx(21.2, abs=0.05)


def test_fit_measured_csv_uses_envelope(tmp_path):
    tau = np.arange(-200.0, 201.0, 1.0)
    y = analytic_sigma0(708.71, 0.0275, 0.022, tau)
    p = tmp_path / "measured.csv"
    rows = "".join(f"{float(t)!r},{float(v)!r},0.0\n" for t, v in zip(tau, y))
    p.write_text("tau_fs,value_hz,stderr_hz\n" + rows)
    result = runner.invoke(app, ["fit", str(p), "-o", str(tmp_path / "out")])
    assert result.exit_code == 0, result.output
    assert "model: envelope" in result.output


def test_fit_refuses_dephased_trace(tmp_path):
    out = tmp_path / "run"
    cfg = tmp_path / "c.yaml"
    cfg.write_text(SMALL.replace("[0, 1]", "[10]").replace("step: 5", "step: 1"))
    assert _simulate(cfg, out).exit_code == 0
    result = runner.invoke(app, ["fit", str(out / "traces" / "expected_sigma_10.0.csv"), "-o", str(out)])
    assert result.exit_code == EXIT_RUNTIME
    assert "fit failed" in result.output


def test_fit_unknown_model(tmp_path):
    p = tmp_path / "t.csv"
    p.write_text("tau_fs,value_hz,stderr_hz\n0,1,0\n")
    result = runner.invoke(app, ["fit", str(p), "--model", "lorentzian", "-o", str(tmp_path)])
    assert result.exit_code == EXIT_CONFIG


def test_fit_missing_file(tmp_path):
    result = runner.invoke(app, ["fit", str(tmp_path / "missing.csv"), "-o", str(tmp_path)])
    assert result.exit_code == EXIT_RUNTIME


def test_calibrate(tmp_path):
    result = runner.invoke(app, ["calibrate", "-o", str(tmp_path)])
    assert result.exit_code == 0, result.output
    cal = json.loads((tmp_path / "calibration.json").read_text())
    assert cal["target_hz"] == 26.93
    assert cal["expected_background_hz"] == pytest.approx(26.93, abs=0.1)
    assert 0.004 < cal["bin_width"] < 0.006


def test_calibrate_unreachable_target(tmp_path):
    result = runner.invoke(app, ["calibrate", "-o", str(tmp_path), "--target", "1e6"])
    assert result.exit_code == EXIT_RUNTIME


def test_verify_command(tmp_path):
    cfg = tmp_path / "v.yaml"
    cfg.write_text("verify:\n  n_pos: 8\n  n_realizations: 2000\n  n_correlator: 4000\n")
    ok = runner.invoke(app, ["verify", "-c", str(cfg), "-o", str(tmp_path / "ok")])
    assert ok.exit_code == 0, ok.output
    assert (tmp_path / "ok" / "verify" / "report.json").exists()

    cfg.write_text(cfg.read_text() + "  tolerance_scale: 0\n")
    bad = runner.invoke(app, ["verify", "-c", str(cfg), "-o", str(tmp_path / "bad")])
    assert bad.exit_code == EXIT_VERIFY


def test_show_config(tmp_path, small_cfg):
    result = runner.invoke(app, ["show-config", "-c", str(small_cfg)])
    assert result.exit_code == 0
    assert "n_pos: 16" in result.output
    assert "calibrate_to_hz: null" in result.output


def test_entry_point_usage_error_is_a_config_error():
    with pytest.raises(SystemExit) as exc:
        run_cli(["simulate", "--no-such-flag"])
    assert exc.value.code == EXIT_CONFIG


def test_simulate_writes_map_for_several_sigmas(tmp_path, small_cfg):
    out = tmp_path / "run"
    assert _simulate(small_cfg, out).exit_code == 0
    meta = json.loads((out / "curves" / "correlation_map.json").read_text())
    assert meta["sigma_rad"] == [0.0, 1.0]
    assert meta["n_tau"] == 81
    single = tmp_path / "single"
    assert _simulate(small_cfg, single, "--sigma", "0").exit_code == 0
    assert not (single / "curves" / "correlation_map.csv").exists()


def test_simulate_with_quadratic_phase_lowers_the_peak(tmp_path):
    plain, chirped = tmp_path / "plain.yaml", tmp_path / "chirped.yaml"
    plain.write_text(SMALL)
    chirped.write_text(SMALL + "shaper:\n  gdd: 800\n")
    for cfg in (plain, chirped):
        assert _simulate(cfg, tmp_path / cfg.stem, "--sigma", "0").exit_code == 0
    resolved = json.loads((tmp_path / "chirped" / "resolved_config.json").read_text())
    assert resolved["shaper"]["gdd"] == 800.0

    def peak(run):
        rows = (tmp_path / run / "traces" / "trace_sigma_0.0.csv").read_text().splitlines()[1:]
        return {float(r.split(",")[0]): float(r.split(",")[1]) for r in rows}[0.0]

    assert peak("plain") == pytest.approx(708.71, rel=1e-6)
    assert peak("chirped") < 0.9 * peak("plain")
