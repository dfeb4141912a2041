import hashlib
import json
from pathlib import Path

import pytest

from jeans_blowup import cli


def _digest(directory: Path) -> dict:
    return {str(p.relative_to(directory)): hashlib.sha256(p.read_bytes()).hexdigest()
            for p in sorted(directory.rglob("*")) if p.suffix in (".csv", ".json")}


def _summary(directory: Path, command: str) -> dict:
    return json.loads((directory / f"{command}_summary.json").read_text())


def test_defaults_validate():
    cfg = cli.validate_config({})
    assert cfg["parameters"]["beta0"] == 5.0
    assert cfg["wave"]["n_cells"] == 512


@pytest.mark.parametrize("raw, message", [
    ({"wave": {"bogus": 1}}, "unknown key"),
    ({"nope": {}}, "unknown section"),
    ({"wave": {"n_cells": 1.5}}, "integer"),
    ({"ode": {"strict_laws": "yes"}}, "true/false"),
    ({"parameters": {"m2": 0.5}}, "m2"),
    ({"output": {"formats": ["xml"]}}, "formats"),
    ({"sweep": {"parameter": "parameters.zeta"}}, "sweep.parameter"),
    ({"parameters": {"kappa_terms": [{"i": 0}]}}, "kappa_terms"),
])
def test_invalid_configs_rejected(raw, message):
    with pytest.raises(cli.ConfigError, match=message):
        cli.validate_config(raw)


def test_overrides_are_typed(tmp_path):
    path = tmp_path / "s.yaml"
    path.write_text("wave:\n  n_cells: 256\n")
    cfg = cli.load_config(str(path), ["wave.cfl=0.3", "parameters.delta0=0.02", "output.plot=true"])
    assert cfg["wave"]["n_cells"] == 256 and cfg["wave"]["cfl"] == 0.3
    assert cfg["parameters"]["delta0"] == 0.02 and cfg["output"]["plot"] is True
    with pytest.raises(cli.ConfigError):
        cli.load_config(None, ["wave.cfl"])
    with pytest.raises(cli.ConfigError):
        cli.load_config(None, ["wave.cfl={a: 1}"])


def test_config_error_exit_code(tmp_path, capsys):
    path = tmp_path / "bad.yaml"
    path.write_text("geometry:\n  ladder_pts: 3\n")
    assert cli.main(["geometry", str(path), "--out", str(tmp_path / "o")]) == 2
    assert "unknown key" in capsys.readouterr().err


def test_ode_command(tmp_path):
    out = tmp_path / "ode"
    assert cli.main(["ode", "--out", str(out)]) == 0
    s = _summary(out, "ode")
    k = s["results"]["constants"]
    assert abs(k["t_star"] - 1.489) < 1e-3
    assert k["t_upper_star"] == pytest.approx(4.6296, abs=1e-4)
    assert k["t_star"] <= s["results"]["t_m"] < k["t_upper_star"]
    assert s["passed"] and s["exit_code"] == 0
    header = (out / "trajectory.csv").read_text().splitlines()[0]
    assert header == "t,f,f0,gfrak,chi,xi,Gg,Xi,conoid_radius"


def test_failed_verification_still_writes_report(tmp_path):
    out = tmp_path / "strict"
    assert cli.main(["ode", "--out", str(out), "--set", "ode.strict_laws=true"]) == 1
    s = _summary(out, "ode")
    assert "G_abs_nonincreasing" in s["failed"]
    assert (out / "trajectory.csv").exists()


def test_runtime_abort_exit_code(tmp_path):
    out = tmp_path / "abort"
    assert cli.main(["ode", "--out", str(out), "--set", "ode.max_steps=20"]) == 3
    s = _summary(out, "ode")
    assert s["aborted"].startswith("StepUnderflow") and "last_valid_time" in s["results"]


def test_missing_blowup_aborts(tmp_path):
    out = tmp_path / "nb"
    assert cli.main(["geometry", "--out", str(out), "--set", "ode.t_max_factor=1.5"]) == 3
    assert _summary(out, "geometry")["results"]["t_m_lower_bound"] == pytest.approx(1.5)


def test_wave_without_bump(tmp_path):
    out = tmp_path / "flat"
    assert cli.main(["wave", "--out", str(out), "--eps", "0", "--n-cells", "256"]) == 0
    s = _summary(out, "wave")
    assert s["results"]["max_abs_u_checkpoints"] < 1e-6
    assert set(s["checks"]) >= {"homogeneous_reduction", "u_rounding_level"}
    assert (out / "checkpoints.csv").read_text().startswith("t,x,rho,rho_t,g,u\n")


def test_wave_with_bump_small_grid(tmp_path):
    out = tmp_path / "bump"
    code = cli.main(["wave", "--out", str(out), "--n-cells", "256", "--checkpoints", "4"])
    s = _summary(out, "wave")
    assert code == s["exit_code"]
    assert {"sandwich_envelopes", "K_stability", "outside_conoid_below_floor"} <= set(s["checks"])


def test_geometry_and_fuchsian_commands(tmp_path):
    assert cli.main(["geometry", "--out", str(tmp_path / "g")]) == 0
    g = _summary(tmp_path / "g", "geometry")
    assert g["results"]["Xi0"] == pytest.approx(1.125)
    assert cli.main(["fuchsian", "--out", str(tmp_path / "f"), "--samples", "500", "--seed", "2"]) == 0
    f = _summary(tmp_path / "f", "fuchsian")
    assert f["config"]["fuchsian"]["seed"] == 2
    assert f["results"]["feasibility"]["nonempty"] is True


@pytest.mark.parametrize("command, extra", [
    ("ode", []), ("geometry", []), ("fuchsian", ["--samples", "300"]),
    ("wave", ["--n-cells", "128", "--set", "wave.convergence=false", "--set", "wave.k_stability=false"]),
])
def test_outputs_are_byte_identical_on_rerun(tmp_path, command, extra):
    out = tmp_path / command
    cli.main([command, "--out", str(out), *extra])
    first = _digest(out)
    cli.main([command, "--out", str(out), *extra])
    assert _digest(out) == first and first


def test_sweep_and_report(tmp_path):
    out = tmp_path / "sweep"
    assert cli.main(["sweep", "--out", str(out)]) == 0
    dirs = sorted(p.name for p in out.iterdir() if p.is_dir())
    assert dirs == ["beta0_4.0", "beta0_5.0", "beta0_6.0"]
    first = _digest(out)
    cli.main(["sweep", "--out", str(out)])
    assert _digest(out) == first
    tms = [_summary(out / d, "ode")["results"]["t_m"] for d in dirs]
    assert tms[0] > tms[1] > tms[2]
    assert cli.main(["report", "--out", str(out)]) == 0
    rep = json.loads((out / "report.json").read_text())
    assert len(rep["summaries"]) == 3 and rep["all_passed"]


def test_report_requires_existing_directory(tmp_path):
    assert cli.main(["report", "--out", str(tmp_path / "missing")]) == 2


def test_plots_render_from_csv_only(tmp_path):
    pytest.importorskip("matplotlib")
    out = tmp_path / "p"
    cli.main(["ode", "--out", str(out), "--plot"])
    assert (out / "f_envelopes.svg").exists()
    (out / "f_envelopes.svg").unlink()
    (out / "ode_summary.json").unlink()
    paths = cli.plot_ode(out)
    assert paths and paths[0].read_text().startswith("<?xml")
    cli.main(["geometry", "--out", str(out), "--plot"])
    assert (out / "gamma_conoid.svg").exists()


def test_csv_and_json_writers_are_exact(tmp_path):
    cli.write_csv(tmp_path / "a.csv", {"x": [0.1, float("nan")], "y": [1e-300, 2.0]})
    assert (tmp_path / "a.csv").read_text() == "x,y\n0.10000000000000001,1e-300\nnan,2\n"
    back = cli.read_csv(tmp_path / "a.csv")
    assert back["x"][0] == 0.1
    cli.write_json(tmp_path / "a.json", {"b": float("inf"), "a": 1})
    assert json.loads((tmp_path / "a.json").read_text()) == {"a": 1, "b": "inf"}
