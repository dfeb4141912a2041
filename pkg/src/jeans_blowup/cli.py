"""Scenario runner: ode | wave | geometry | fuchsian | sweep | report.

Every command reads one YAML scenario file (all keys optional, unknown
keys rejected), writes CSV and JSON artifacts into the output directory
and returns

    0  all enabled verifications passed
    1  a verification failed (the report is still written)
    2  the configuration is invalid
    3  the computation aborted (loss of hyperbolicity, vacuum, no blowup, ...)

Artifacts are byte-identical across reruns of the same configuration:
JSON is written with sorted keys, CSV with ``%.17g`` and no wall times
are recorded.  SVG plots are rendered from the CSV files only.
"""

from __future__ import annotations

import argparse
import copy
import dataclasses
import enum
import json
import math
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np
import yaml

from . import fuchsian_check as fc
from . import geometry as geo
from . import reference_ode as ro
from . import wave_solver as ws
from .model_core import DomainError, KappaTerm, ModelParameters, ParameterError, envelopes
from .transforms import ChartDegenerate, HomogeneousChart, verify_identities

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_ABORT = 0, 1, 2, 3


class ConfigError(ValueError):
    pass


RUNTIME_ABORTS = (ws.HyperbolicityLost, ws.VacuumCross, ws.CFLCollapse, ro.StepUnderflow,
                  ro.NotBlownUp, ChartDegenerate)

# ---------------------------------------------------------------------------
# configuration schema
# ---------------------------------------------------------------------------

FLOAT, INT, BOOL, STR = "float", "int", "bool", "str"

# key -> (default, type); a default of None makes the key optional
SCHEMA = {
    "parameters": {
        "t0": (1.0, FLOAT), "beta": (1.0, FLOAT), "beta0": (5.0, FLOAT), "k": (0.25, FLOAT),
        "m2": (0.25, FLOAT), "q_mag": (4.0, FLOAT), "n": (1, INT), "kappa_terms": ([], "kappa"),
        "A": (1.0, FLOAT), "sigma0": (0.5, FLOAT), "delta0": (0.05, FLOAT), "gamma": (0.5, FLOAT),
        "a": (4.0 / 3.0, FLOAT), "b": (2.0 / 3.0, FLOAT), "c": (4.0 / 3.0, FLOAT),
    },
    "ode": {
        "rel_tol": (1e-12, FLOAT), "abs_tol": (1e-12, FLOAT), "blowup_threshold": (1e12, FLOAT),
        "max_steps": (200000, INT), "t_max_factor": (1e3, FLOAT),
        "tm_rel_uncertainty": (1e-4, FLOAT), "strict_laws": (False, BOOL),
    },
    "wave": {
        "n_cells": (512, INT), "cfl": (0.4, FLOAT), "eps": (1e-3, FLOAT), "eps0": (None, FLOAT),
        "t_end": (None, FLOAT), "t_end_fraction": (0.9, FLOAT), "n_checkpoints": (8, INT),
        "half_width": (None, FLOAT), "margin": (1.0, FLOAT), "backend": (None, STR),
        "homogeneous_tol": (1e-6, FLOAT),
        "convergence": (True, BOOL), "convergence_cells": (None, [INT]),
        "ratio_band": ([8.0, 20.0], [FLOAT]),
        "k_stability": (True, BOOL), "k_tolerance": (0.3, FLOAT),
        "cross_check": (False, BOOL), "cross_check_factor": (5.0, FLOAT),
    },
    "geometry": {
        "delta0": (None, FLOAT), "ladder_points": (24, INT), "ladder": (None, [FLOAT]),
        "surface_points": (401, INT), "conoid_points": (200, INT), "conoid_tol": (1e-6, FLOAT),
    },
    "fuchsian": {
        "pd_samples": (10000, INT), "minor_samples": (80, INT), "seed": (0, INT),
        "R_hat": (0.01, FLOAT), "delta0": (None, FLOAT), "sobolev_k": (None, INT),
        "lattice": (64, INT), "safety": (2.0, FLOAT),
        "residuals": (False, BOOL), "residual_eps": (1e-3, FLOAT), "residual_cells": (512, INT),
    },
    "sweep": {
        "parameter": ("parameters.beta0", STR), "values": ([4.0, 5.0, 6.0], ["any"]),
        "commands": (["ode"], [STR]), "workers": (4, INT),
    },
    "output": {
        "directory": ("out", STR), "formats": (["csv", "json"], [STR]), "plot": (False, BOOL),
    },
}

COMMANDS = ("ode", "wave", "geometry", "fuchsian")


def default_config() -> dict:
    return {sec: {k: copy.deepcopy(v[0]) for k, v in keys.items()} for sec, keys in SCHEMA.items()}


def _coerce_scalar(where, value, kind):
    if kind == "any":
        if isinstance(value, (dict, list)):
            raise ConfigError(f"{where}: expected a scalar")
        return value
    if kind == BOOL:
        if not isinstance(value, bool):
            raise ConfigError(f"{where}: expected true/false, got {value!r}")
        return value
    if kind == INT:
        if isinstance(value, bool) or not isinstance(value, (int, float)) or float(value) != int(value):
            raise ConfigError(f"{where}: expected an integer, got {value!r}")
        return int(value)
    if kind == FLOAT:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{where}: expected a number, got {value!r}")
        return float(value)
    if kind == STR:
        if not isinstance(value, str):
            raise ConfigError(f"{where}: expected a string, got {value!r}")
        return value
    raise AssertionError(kind)


def _coerce(where, value, default, kind):
    if value is None:
        if default is None:
            return None
        raise ConfigError(f"{where}: may not be null")
    if kind == "kappa":
        if not isinstance(value, list):
            raise ConfigError(f"{where}: expected a list of terms")
        out = []
        allowed = {"i", "j", "coeff", "p_t", "p_rho"}
        for n, term in enumerate(value):
            if not isinstance(term, dict) or not {"i", "j", "coeff"} <= set(term) or set(term) - allowed:
                raise ConfigError(f"{where}[{n}]: needs keys i, j, coeff (optional p_t, p_rho)")
            out.append({"i": _coerce_scalar(where, term["i"], INT), "j": _coerce_scalar(where, term["j"], INT),
                        "coeff": _coerce_scalar(where, term["coeff"], FLOAT),
                        "p_t": _coerce_scalar(where, term.get("p_t", 0), INT),
                        "p_rho": _coerce_scalar(where, term.get("p_rho", 0), INT)})
        return out
    if isinstance(kind, list):
        if not isinstance(value, list):
            raise ConfigError(f"{where}: expected a list")
        return [_coerce_scalar(where, v, kind[0]) for v in value]
    return _coerce_scalar(where, value, kind)


def validate_config(raw: dict | None) -> dict:
    """Merge ``raw`` over the defaults, rejecting unknown sections and keys."""
    cfg = default_config()
    if raw is None:
        return cfg
    if not isinstance(raw, dict):
        raise ConfigError("top level must be a mapping of sections")
    for sec, body in raw.items():
        if sec not in SCHEMA:
            raise ConfigError(f"unknown section {sec!r}")
        if body is None:
            continue
        if not isinstance(body, dict):
            raise ConfigError(f"section {sec!r} must be a mapping")
        for key, value in body.items():
            if key not in SCHEMA[sec]:
                raise ConfigError(f"unknown key {sec}.{key}")
            default, kind = SCHEMA[sec][key]
            cfg[sec][key] = _coerce(f"{sec}.{key}", value, default, kind)
    fmts = set(cfg["output"]["formats"])
    if fmts - {"csv", "json"}:
        raise ConfigError("output.formats accepts csv and json")
    for c in cfg["sweep"]["commands"]:
        if c not in COMMANDS:
            raise ConfigError(f"sweep.commands: unknown command {c!r}")
    sec, _, key = cfg["sweep"]["parameter"].partition(".")
    if sec not in SCHEMA or key not in SCHEMA[sec] or sec in ("sweep", "output"):
        raise ConfigError(f"sweep.parameter: unknown key {cfg['sweep']['parameter']!r}")
    if cfg["wave"]["convergence_cells"] is not None and len(cfg["wave"]["convergence_cells"]) != 3:
        raise ConfigError("wave.convergence_cells needs three grid sizes")
    if len(cfg["wave"]["ratio_band"]) != 2:
        raise ConfigError("wave.ratio_band needs two numbers")
    if cfg["wave"]["backend"] not in (None, "python", "cython"):
        raise ConfigError("wave.backend must be python or cython")
    model_parameters(cfg)
    return cfg


def apply_override(raw: dict, assignment: str) -> None:
    """Apply ``section.key=value`` (value parsed as YAML) to a raw config."""
    path, sep, text = assignment.partition("=")
    sec, dot, key = path.strip().partition(".")
    if not sep or not dot or not key:
        raise ConfigError(f"override {assignment!r} is not of the form section.key=value")
    try:
        value = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"override {assignment!r}: {exc}") from None
    if isinstance(value, (dict, list)) and not (sec, key) in (("wave", "convergence_cells"),
                                                               ("wave", "ratio_band"),
                                                               ("sweep", "values"),
                                                               ("sweep", "commands"),
                                                               ("output", "formats"),
                                                               ("geometry", "ladder")):
        raise ConfigError(f"override {assignment!r}: only scalar keys can be overridden")
    body = raw.setdefault(sec, {})
    if not isinstance(body, dict):
        raise ConfigError(f"section {sec!r} must be a mapping")
    body[key] = value


def load_config(path: str | None, overrides=()) -> dict:
    raw = {}
    if path is not None:
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read {path}: {exc}") from None
        try:
            raw = yaml.safe_load(text) or {}
        except yaml.YAMLError as exc:
            raise ConfigError(f"{path}: {exc}") from None
        if not isinstance(raw, dict):
            raise ConfigError("top level must be a mapping of sections")
    raw = copy.deepcopy(raw)
    for item in overrides:
        apply_override(raw, item)
    return validate_config(raw)


def model_parameters(cfg: dict) -> ModelParameters:
    p = dict(cfg["parameters"])
    p["kappa_terms"] = tuple(KappaTerm(**t) for t in p["kappa_terms"])
    try:
        return ModelParameters(**p)
    except ParameterError as exc:
        raise ConfigError(f"parameters: {exc}") from None


def integrator_config(cfg: dict) -> ro.IntegratorConfig:
    o = cfg["ode"]
    try:
        return ro.IntegratorConfig(rel_tol=o["rel_tol"], abs_tol=o["abs_tol"],
                                   blowup_threshold=o["blowup_threshold"], max_steps=o["max_steps"],
                                   t_max_factor=o["t_max_factor"])
    except ValueError as exc:
        raise ConfigError(f"ode: {exc}") from None


# ---------------------------------------------------------------------------
# output helpers
# ---------------------------------------------------------------------------

def clean(obj):
    """Convert to plain JSON types; non-finite floats become strings."""
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        return clean(obj.to_dict() if hasattr(obj, "to_dict") else dataclasses.asdict(obj))
    if isinstance(obj, dict):
        return {str(k): clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return clean(obj.tolist())
    if isinstance(obj, enum.Enum):
        return obj.value
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if math.isnan(x):
            return "nan"
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return x
    return obj


def write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(clean(obj), sort_keys=True, indent=2, allow_nan=False) + "\n")


def write_csv(path: Path, columns: dict) -> None:
    names = list(columns)
    data = np.column_stack([np.asarray(columns[k], dtype=float).ravel() for k in names])
    np.savetxt(path, data, delimiter=",", header=",".join(names), comments="", fmt="%.17g")


def read_csv(path: Path) -> dict:
    data = np.genfromtxt(path, delimiter=",", names=True)
    return {name: np.atleast_1d(data[name]) for name in data.dtype.names}


class Artifacts:
    """Collects checks and results for one command and writes its summary."""

    def __init__(self, command: str, cfg: dict, out: Path | None = None):
        self.command = command
        self.cfg = cfg
        self.out = Path(cfg["output"]["directory"]) if out is None else out
        self.out.mkdir(parents=True, exist_ok=True)
        self.checks: dict[str, bool] = {}
        self.expected_failures: dict[str, bool] = {}
        self.results: dict = {}
        self.notes: list[str] = []
        self.files: list[str] = []
        self.aborted: str | None = None

    def check(self, name: str, ok) -> bool:
        self.checks[name] = bool(ok)
        return bool(ok)

    def csv(self, name: str, columns: dict) -> None:
        if "csv" in self.cfg["output"]["formats"]:
            write_csv(self.out / name, columns)
            self.files.append(name)

    def json(self, name: str, obj) -> None:
        if "json" in self.cfg["output"]["formats"]:
            write_json(self.out / name, obj)
            self.files.append(name)

    @property
    def passed(self) -> bool:
        return self.aborted is None and all(self.checks.values())

    @property
    def exit_code(self) -> int:
        if self.aborted is not None:
            return EXIT_ABORT
        return EXIT_OK if self.passed else EXIT_FAIL

    def finish(self) -> int:
        summary = {
            "command": self.command,
            "config": self.cfg,
            "checks": self.checks,
            "expected_failures": self.expected_failures,
            "failed": sorted(k for k, v in self.checks.items() if not v),
            "passed": self.passed,
            "exit_code": self.exit_code,
            "aborted": self.aborted,
            "results": self.results,
            "notes": self.notes,
            "files": sorted(self.files),
        }
        write_json(self.out / f"{self.command}_summary.json", summary)
        if self.cfg["output"]["plot"] and self.aborted is None:
            render_plots(self.out, self.command)
        return self.exit_code


def _trajectory(cfg: dict, art: Artifacts):
    params = model_parameters(cfg)
    traj = ro.integrate(params, integrator_config(cfg))
    t_m, unc, est = ro.estimate_blowup_time(traj)
    art.results["constants"] = traj.consts.to_dict()
    art.results["t_m"] = t_m
    art.results["t_m_uncertainty"] = unc
    return params, traj, t_m, unc, est


def _run_guarded(command: str, cfg: dict, body, out: Path | None = None) -> int:
    art = Artifacts(command, cfg, out)
    try:
        body(art)
    except RUNTIME_ABORTS as exc:
        art.aborted = f"{type(exc).__name__}: {exc}"
        if isinstance(exc, ro.NotBlownUp):
            art.results["t_m_lower_bound"] = exc.lower_bound
        elif isinstance(exc, ro.StepUnderflow):
            art.results["last_valid_time"] = exc.last_time
    return art.finish()


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def _ode_body(cfg: dict, art: Artifacts) -> None:
    params, traj, t_m, unc, est = _trajectory(cfg, art)
    k = traj.consts
    art.results["t_m_threshold_estimates"] = est
    art.results["assumptions"] = ro.check_assumptions(params).to_dict()
    art.check("t_m_in_bracket", k.t_star <= t_m < k.t_upper_star)
    art.check("t_m_uncertainty", unc < cfg["ode"]["tm_rel_uncertainty"] * t_m)

    env = envelopes(params, k)
    t, f = traj.t, traj.f
    lower = np.array([env.lower(s) for s in t])
    upper = np.array([env.upper(s) if s < k.t_star else np.nan for s in t])
    improved = np.full(t.shape, np.nan)
    if k.breve_beta > 0:
        for i, s in enumerate(t):
            try:
                improved[i] = env.improved_lower(s)
            except DomainError:
                pass
    # envelopes touch f at t0; compare 1+f with a rounding-level slack
    slack = 1e-12 * (1.0 + f)
    low_viol = int(np.count_nonzero(f < lower - slack))
    up = np.isfinite(upper)
    up_viol = int(np.count_nonzero(f[up] > upper[up] + slack[up]))
    art.results["envelope_violations"] = {"lower": low_viol, "upper": up_viol,
                                          "upper_nodes": int(up.sum()), "nodes": int(t.size)}
    art.check("envelopes_at_nodes", low_viol == 0 and up_viol == 0)

    ident = verify_identities(traj)
    art.results["identities"] = ident.to_dict()
    art.check("identities", ident.passes())

    laws = ro.verify_quantity_laws(traj)
    art.results["laws"] = laws.to_dict()
    art.check("f0_identity", laws.f0_identity_max_residual < 1e-8)
    art.check("gfrak_forms", laws.gfrak_forms_max_residual < 1e-8)
    art.check("chi_derivative", laws.dchi_max_residual < 1e-6)
    art.results["xi_monotone_max_violation"] = laws.xi_monotone_max_violation
    if laws.G_nonneg_asserted:
        art.check("xi_decreasing", laws.xi_monotone_max_violation <= 1e-10)
    else:
        art.notes.append("assumption A1 fails, so xi monotonicity is reported but not checked")
    if laws.Xi_vs_G_max_residual is not None:
        art.check("Xi_equals_G_over_2B", laws.Xi_vs_G_max_residual < 1e-10)
    # monotonicity and sign laws that fail for admissible data (see README)
    strict = {
        "G_abs_nonincreasing": laws.G_monotone_max_violation <= 1e-10,
        "Xi_decreasing": laws.Xi_monotone_max_violation <= 1e-10,
    }
    if laws.G_nonneg_asserted:
        strict["G_nonnegative"] = laws.G_nonneg_min >= -1e-10
    if cfg["ode"]["strict_laws"]:
        for name, ok in strict.items():
            art.check(name, ok)
    else:
        art.expected_failures.update(strict)
        art.notes.append("G and Xi monotonicity/sign laws are reported under expected_failures; "
                         "set ode.strict_laws to count them")

    cols = traj.columns()
    art.csv("trajectory.csv", cols)
    art.csv("envelopes.csv", {"t": t, "f": f, "lower": lower, "upper": upper, "improved_lower": improved})


def cmd_ode(cfg: dict, out: Path | None = None) -> int:
    return _run_guarded("ode", cfg, lambda art: _ode_body(cfg, art), out)


def _grid(cfg: dict, n_cells: int | None = None) -> ws.GridConfig:
    w = cfg["wave"]
    try:
        return ws.GridConfig(n_cells=n_cells or w["n_cells"], half_width=w["half_width"], cfl=w["cfl"],
                             t_end=w["t_end"], t_end_fraction=w["t_end_fraction"],
                             n_checkpoints=w["n_checkpoints"], margin=w["margin"], backend=w["backend"])
    except ValueError as exc:
        raise ConfigError(f"wave: {exc}") from None


def _initial_data(cfg: dict, eps: float | None = None) -> ws.InitialData:
    w = cfg["wave"]
    e = w["eps"] if eps is None else eps
    e0 = w["eps0"]
    if e0 is not None and eps is not None and w["eps"] > 0:
        e0 = e0 * eps / w["eps"]
    return ws.InitialData(eps=e, eps0=e0)


def _normalized_deviation(run: ws.WaveRun, g, rho):
    fb = run.traj.sol(run.chart.b_up(g.ravel()))[0].reshape(g.shape)
    return (rho - fb) / fb


def _wave_body(cfg: dict, art: Artifacts) -> None:
    params, traj, t_m, _, _ = _trajectory(cfg, art)
    w = cfg["wave"]
    grid = _grid(cfg)
    data = _initial_data(cfg)
    eps, eps0 = data.amplitudes(params)
    run = ws.run(params, data, grid, traj=traj, t_m=t_m)
    art.results["run"] = run.summary()
    art.check("hyperbolicity_margin", float(np.min(run.hyper_min)) > 0)

    t, rho, rho_t, g = ws.checkpoint_fields(run)
    u = _normalized_deviation(run, g, rho)
    art.results["max_abs_u_checkpoints"] = float(np.max(np.abs(u)))
    if params.n == 1:
        X = np.broadcast_to(run.x, rho.shape)
        coords = {"x": X}
    else:
        X1, X2 = np.meshgrid(run.x[0], run.x[1], indexing="ij")
        coords = {"x1": np.broadcast_to(X1, rho.shape), "x2": np.broadcast_to(X2, rho.shape)}
    T = np.broadcast_to(t.reshape((-1,) + (1,) * (rho.ndim - 1)), rho.shape)
    art.csv("checkpoints.csv", {"t": T, **coords, "rho": rho, "rho_t": rho_t, "g": g, "u": u})
    env = envelopes(params, traj.consts)
    k = traj.consts
    art.csv("checkpoint_envelopes.csv", {
        "t": t, "f": run.reference(t)[0],
        "lower": [env.lower(s) for s in t],
        "upper": [env.upper(s) if s < k.t_star else np.nan for s in t],
    })

    if eps == 0 and eps0 == 0:
        tol = w["homogeneous_tol"]
        art.check("homogeneous_reduction", run.summary()["max_rel_deviation_from_f"] < tol)
        art.check("u_rounding_level", float(np.max(np.abs(u))) < tol)
        return
    if params.n != 1:
        art.notes.append("sandwich, conoid and convergence checks are implemented for n = 1 only")
        return

    sand = ws.verify_sandwich(run)
    art.results["sandwich"] = sand.to_dict()
    art.check("sandwich_envelopes", sand.envelope_ok)
    art.check("sandwich_decay_trend", sand.decay_ok)
    if w["k_stability"]:
        half = ws.run(params, _initial_data(cfg, eps / 2.0), grid, traj=traj, t_m=t_m)
        sand2 = ws.verify_sandwich(half)
        change = abs(sand2.K / sand.K - 1.0) if sand.K > 0 else float("nan")
        art.results["K_half_eps"] = sand2.K
        art.results["K_relative_change"] = change
        art.check("K_stability", change <= w["k_tolerance"])

    dev = ws.outside_conoid_deviation(run, cells=2)
    art.results["outside_conoid_deviation"] = dev
    if w["convergence"]:
        N = grid.n_cells
        cells = tuple(w["convergence_cells"] or (N // 2, N, 2 * N))
        conv = ws.convergence_study(params, data, cells, grid=grid, traj=traj, t_m=t_m)
        art.results["convergence"] = conv.to_dict()
        lo, hi = w["ratio_band"]
        art.check("richardson_ratio", lo <= conv.ratio <= hi)
        floor = conv.differences[-1]
        art.results["convergence_floor"] = floor
        art.check("outside_conoid_below_floor", dev < floor)
        if w["cross_check"]:
            r1 = ws.run_eq1(params, data, grid, traj=traj, t_m=t_m)
            disc = ws.eq1_eq2_discrepancy(run, r1)
            art.results["eq1_eq2_discrepancy"] = disc
            art.check("eq1_eq2_cross_check", disc <= w["cross_check_factor"] * conv.error_estimate)
    elif w["cross_check"]:
        art.notes.append("wave.cross_check needs wave.convergence for its error estimate")


def cmd_wave(cfg: dict, out: Path | None = None) -> int:
    return _run_guarded("wave", cfg, lambda art: _wave_body(cfg, art), out)


def _geometry_body(cfg: dict, art: Artifacts) -> None:
    params, traj, t_m, _, _ = _trajectory(cfg, art)
    gcfg = cfg["geometry"]
    d0 = params.delta0 if gcfg["delta0"] is None else gcfg["delta0"]
    chart = HomogeneousChart(traj, t_m)
    surf = geo.gamma_surface(traj, d0)
    tip = float(surf.T_tilde(-1.0 / d0))
    gap = float(surf.branch_gap())
    art.results.update({
        "delta0": d0, "T_tilde_at_left_end": tip, "branch_gap": gap,
        "junction_tilde": surf.junction_tilde, "junction_tilde_times_delta0": surf.junction_tilde * d0,
        "c_const": surf.c_const, "Xi0": float(traj.Xi[0]),
    })
    art.check("T_tilde_left_end", abs(tip + 1.0) <= 1e-15)
    art.check("branch_continuity", gap < 1e-10)

    ladder = gcfg["ladder"] if gcfg["ladder"] is not None else geo.default_ladder(gcfg["ladder_points"])
    reach = geo.verify_pm_reachability(traj, chart, d0, ladder)
    art.results["reachability"] = reach.to_dict()
    art.check("ladder_inhomogeneous", reach.all_inhomogeneous)
    art.check("ladder_monotone", bool(np.all(np.diff(reach.log_neg_tau) < 0)))
    decay = geo.lens_decay_check(surf)
    art.results["lens_decay"] = decay.to_dict()
    art.check("lens_decay", decay.holds)

    con = geo.Conoid(chart)
    tc = np.linspace(params.t0, traj.t[-1], gcfg["conoid_points"])
    R = con.radius(tc)
    if params.m2 == params.k == 0.25:
        Rc = con.radius_closed_form(tc)
        err = float(np.max(np.abs(R - Rc)))
        art.results["conoid_closed_form_max_error"] = err
        art.check("conoid_closed_form", err < gcfg["conoid_tol"])
    else:
        Rc = np.full(tc.shape, np.nan)
    art.csv("conoid.csv", {"t": tc, "radius": R, "radius_closed_form": Rc})

    zeta = np.linspace(-1.0 / d0, 20.0 / d0, gcfg["surface_points"])
    s = surf.log_neg_gamma_tau(zeta)
    tau = -np.exp(s)
    t_gamma = chart.b_up(tau)
    art.csv("gamma.csv", {"zeta": zeta, "log_neg_tau": s, "tau": tau, "x": zeta, "t": t_gamma})


def cmd_geometry(cfg: dict, out: Path | None = None) -> int:
    return _run_guarded("geometry", cfg, lambda art: _geometry_body(cfg, art), out)


def _fuchsian_body(cfg: dict, art: Artifacts) -> None:
    params, traj, t_m, _, _ = _trajectory(cfg, art)
    fcfg = cfg["fuchsian"]
    chart = HomogeneousChart(traj, t_m)
    art.results["fuchsian_constants"] = fc.fuchsian_constants(params).to_dict()

    S, ok, strict = fc.s_along_trajectory(chart)
    art.results["S_range"] = [float(np.min(S)), float(np.max(S))]
    art.results["S_lower_bound_strict"] = bool(strict)
    art.check("S_bounds", ok)
    if not strict:
        art.notes.append("S equals its lower bound k when m2 = k; only the non-strict bound is checked")
    art.csv("s_profile.csv", {"t": traj.t, "tau": traj.gfrak, "S": S})

    pd = fc.pd_audit(chart, samples=fcfg["pd_samples"], seed=fcfg["seed"], R_hat=fcfg["R_hat"])
    art.results["pd_audit"] = pd.to_dict()
    art.check("A0_bounds", pd.a0_ok)
    art.check("symmetrized_band", pd.sym_ok)
    art.check("chain_inequality", pd.chain_ok)

    d0 = params.delta0 if fcfg["delta0"] is None else fcfg["delta0"]
    try:
        minors = fc.spacelike_minor_audit(chart, d0, samples=fcfg["minor_samples"], seed=fcfg["seed"])
    except fc.MinorViolation as exc:
        art.results["minor_audit"] = {"violation": str(exc), "location": exc.location}
        art.check("boundary_minors", False)
    else:
        art.results["minor_audit"] = minors.to_dict()
        art.check("boundary_minors", minors.min_scaled_minor >= -minors.tol)
        art.check("face_matrix_zero", minors.face_max_abs == 0.0)

    feas = fc.feasibility(chart, fcfg["sobolev_k"], fcfg["lattice"], fcfg["safety"])
    art.results["feasibility"] = feas.to_dict()
    art.check("gamma_interval_nonempty", feas.nonempty)
    if not feas.configured_admissible:
        art.notes.append("configured gamma lies outside the admissible interval")

    if fcfg["residuals"]:
        run = ws.run(params, _initial_data(cfg, fcfg["residual_eps"]), _grid(cfg, fcfg["residual_cells"]),
                     traj=traj, t_m=t_m)
        res = fc.residual_explicit_equations(run)
        art.results["residuals"] = res.to_dict()
        art.check("explicit_equation_residuals", res.passes)


def cmd_fuchsian(cfg: dict, out: Path | None = None) -> int:
    return _run_guarded("fuchsian", cfg, lambda art: _fuchsian_body(cfg, art), out)


COMMAND_FUNCS = {"ode": cmd_ode, "wave": cmd_wave, "geometry": cmd_geometry, "fuchsian": cmd_fuchsian}


def _label(value) -> str:
    text = str(value)
    return "".join(ch if ch.isalnum() or ch in "-_." else "_" for ch in text)


def sweep_scenarios(cfg: dict) -> list[tuple[str, dict]]:
    """One validated sub-config per sweep value, each with its own directory."""
    sw = cfg["sweep"]
    sec, _, key = sw["parameter"].partition(".")
    base = Path(cfg["output"]["directory"])
    out = []
    for value in sw["values"]:
        raw = copy.deepcopy(cfg)
        raw.pop("sweep")
        raw[sec][key] = value
        name = f"{key}_{_label(value)}"
        raw["output"]["directory"] = str(base / name)
        out.append((name, validate_config(raw)))
    return out


def cmd_sweep(cfg: dict) -> int:
    scenarios = sweep_scenarios(cfg)
    commands = cfg["sweep"]["commands"]

    def one(item):
        name, sub = item
        return name, {c: COMMAND_FUNCS[c](sub) for c in commands}

    workers = max(1, min(cfg["sweep"]["workers"], len(scenarios)))
    with ThreadPoolExecutor(max_workers=workers) as pool:
        results = dict(pool.map(one, scenarios))
    codes = [c for r in results.values() for c in r.values()]
    code = EXIT_ABORT if EXIT_ABORT in codes else (EXIT_FAIL if EXIT_FAIL in codes else EXIT_OK)
    out = Path(cfg["output"]["directory"])
    out.mkdir(parents=True, exist_ok=True)
    write_json(out / "sweep_summary.json", {
        "parameter": cfg["sweep"]["parameter"], "values": cfg["sweep"]["values"],
        "commands": commands, "scenarios": results, "exit_code": code,
    })
    return code


def cmd_report(cfg: dict) -> int:
    """Aggregate every command summary below the output directory."""
    out = Path(cfg["output"]["directory"])
    if not out.is_dir():
        raise ConfigError(f"output directory {out} does not exist")
    entries = {}
    for path in sorted(out.rglob("*_summary.json")):
        if path.name == "sweep_summary.json":
            continue
        s = json.loads(path.read_text())
        entries[str(path.relative_to(out))] = {
            "command": s["command"], "passed": s["passed"], "exit_code": s["exit_code"],
            "failed": s["failed"], "aborted": s["aborted"],
        }
        if cfg["output"]["plot"]:
            render_plots(path.parent, s["command"])
    codes = [e["exit_code"] for e in entries.values()]
    code = EXIT_ABORT if EXIT_ABORT in codes else (EXIT_FAIL if EXIT_FAIL in codes else EXIT_OK)
    write_json(out / "report.json", {"summaries": entries, "exit_code": code,
                                     "all_passed": bool(entries) and code == EXIT_OK})
    return code


# ---------------------------------------------------------------------------
# plots (pure functions of the CSV files)
# ---------------------------------------------------------------------------

def _pyplot():
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
    plt.rcParams["svg.hashsalt"] = "jeans-blowup"
    return plt


def _save(fig, path: Path):
    fig.savefig(path, format="svg", metadata={"Date": None})


def plot_ode(directory: Path) -> list[Path]:
    plt = _pyplot()
    d = read_csv(directory / "envelopes.csv")
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.semilogy(d["t"], 1 + d["f"], label="1 + f")
    ax.semilogy(d["t"], 1 + d["lower"], "--", label="lower envelope")
    ax.semilogy(d["t"], 1 + d["upper"], ":", label="upper envelope")
    if np.any(np.isfinite(d["improved_lower"])):
        ax.semilogy(d["t"], 1 + d["improved_lower"], "-.", label="improved lower")
    ax.set_xlabel("t")
    ax.legend()
    path = directory / "f_envelopes.svg"
    _save(fig, path)
    plt.close(fig)
    return [path]


def plot_wave(directory: Path) -> list[Path]:
    plt = _pyplot()
    d = read_csv(directory / "checkpoints.csv")
    if "x" not in d:
        return []
    e = read_csv(directory / "checkpoint_envelopes.csv")
    fig, ax = plt.subplots(figsize=(6, 4))
    for i, t in enumerate(e["t"]):
        m = d["t"] == t
        line, = ax.plot(d["x"][m], d["rho"][m], lw=1, label=f"t = {t:.4g}")
        ax.axhline(e["lower"][i], color=line.get_color(), ls="--", lw=0.6)
        if np.isfinite(e["upper"][i]):
            ax.axhline(e["upper"][i], color=line.get_color(), ls=":", lw=0.6)
    ax.set_yscale("symlog")
    ax.set_xlabel("x")
    ax.set_ylabel("rho")
    ax.legend(fontsize=6)
    path = directory / "rho_snapshots.svg"
    _save(fig, path)
    plt.close(fig)
    return [path]


def plot_geometry(directory: Path) -> list[Path]:
    plt = _pyplot()
    g = read_csv(directory / "gamma.csv")
    c = read_csv(directory / "conoid.csv")
    fig, (a1, a2) = plt.subplots(1, 2, figsize=(9, 4))
    a1.plot(g["zeta"], g["log_neg_tau"])
    a1.set_xlabel("zeta")
    a1.set_ylabel("ln(-tau) on the boundary surface")
    a2.plot(c["radius"], c["t"], label="conoid")
    a2.plot(g["x"], g["t"], label="boundary surface")
    a2.set_xlabel("x")
    a2.set_ylabel("t")
    a2.legend()
    path = directory / "gamma_conoid.svg"
    _save(fig, path)
    plt.close(fig)
    return [path]


PLOTTERS = {"ode": plot_ode, "wave": plot_wave, "geometry": plot_geometry}


def render_plots(directory: Path, command: str) -> list[Path]:
    fn = PLOTTERS.get(command)
    if fn is None:
        return []
    try:
        return fn(Path(directory))
    except ImportError:
        print("matplotlib is not installed; skipping plots", file=sys.stderr)
    except OSError:
        pass  # CSV output disabled
    return []


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------

FLAG_KEYS = {
    "n_cells": "wave.n_cells", "cfl": "wave.cfl", "eps": "wave.eps", "delta0": "parameters.delta0",
    "checkpoints": "wave.n_checkpoints", "samples": "fuchsian.pd_samples", "seed": "fuchsian.seed",
    "out": "output.directory",
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="jeans-blowup", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("ode", "wave", "geometry", "fuchsian", "sweep", "report"):
        p = sub.add_parser(name)
        p.add_argument("config", nargs="?", help="YAML scenario file (defaults apply if omitted)")
        p.add_argument("--set", action="append", default=[], metavar="SECTION.KEY=VALUE",
                       help="override one configuration key; repeatable")
        p.add_argument("--out", help="output directory")
        p.add_argument("--n-cells", type=int, help="wave grid cells")
        p.add_argument("--cfl", type=float, help="CFL factor")
        p.add_argument("--eps", type=float, help="bump amplitude")
        p.add_argument("--delta0", type=float, help="boundary surface parameter")
        p.add_argument("--checkpoints", type=int, help="number of wave checkpoints")
        p.add_argument("--samples", type=int, help="positive definiteness audit samples")
        p.add_argument("--seed", type=int, help="audit sample seed")
        plot = p.add_mutually_exclusive_group()
        plot.add_argument("--plot", dest="plot", action="store_true", default=None)
        plot.add_argument("--no-plot", dest="plot", action="store_false")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    overrides = list(args.set)
    for flag, key in FLAG_KEYS.items():
        value = getattr(args, flag)
        if value is not None:
            overrides.append(f"{key}={json.dumps(value)}")
    if args.plot is not None:
        overrides.append(f"output.plot={'true' if args.plot else 'false'}")
    try:
        cfg = load_config(args.config, overrides)
        if args.command == "sweep":
            code = cmd_sweep(cfg)
        elif args.command == "report":
            code = cmd_report(cfg)
        else:
            code = COMMAND_FUNCS[args.command](cfg)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    status = {EXIT_OK: "PASS", EXIT_FAIL: "FAIL", EXIT_ABORT: "ABORT"}[code]
    print(f"{args.command}: {status} ({cfg['output']['directory']})")
    return code


if __name__ == "__main__":
    raise SystemExit(main())
