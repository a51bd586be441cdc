"""Command-line front end: config ingestion, presets, experiment dispatch,
and machine-readable result emission (summary.json + CSV files).

Config files are YAML (comments allowed) or JSON with the same nested
schema; unknown keys are rejected.  Exit codes: 0 success, 2 config or
validation error, 3 solver error.
"""

import argparse
import json
import math
import os
import sys

import numpy as np
import yaml

from . import dynamics, model, presets, protocols, thermo, validation
from .errors import (CertificationError, FitError, SteadyStateError,
                     StiffnessError, TruncationError)
from .lindblad import build_liouvillian
from .model import build_h_rwa

ENV_OUT = "BOSONIC_FRIDGE_OUT"

_SCHEMA = {
    "system": {"omega_c_ghz", "omega_h_ghz", "omega_r_ghz", "kappa_c_ghz",
               "kappa_h_ghz", "kappa_r_ghz", "t_cold_mk", "t_hot_mk",
               "t_room_mk", "lambda_c", "lambda_h", "lambda_r", "ej_ghz",
               "phi_rad"},
    "solver": {"dims", "auto_truncate", "truncate_tol", "truncate_step",
               "rtol", "atol", "steady_tol", "max_product"},
    "experiment": {"kind", "schedule", "sweep", "fit", "rwa", "transient"},
    "output": {"directory", "formats"},
}

_EXPERIMENT_SCHEMA = {
    "schedule": {"segments", "on_off", "points_per_segment"},
    "sweep": {"param", "start", "stop", "num", "spacing", "values", "auto_dims"},
    "fit": {"mode", "span_kappa", "points"},
    "rwa": {"on_kappa", "off_kappa", "points_per_segment"},
    "transient": {"horizon_kappa", "off_horizon_kappa", "rel_margin"},
}

KINDS = ("steady", "schedule", "transient", "sweep", "fit", "rwa",
         "thermality", "invariants")


class ConfigError(ValueError):
    pass


# ---------------------------------------------------------------------------
# config handling
# ---------------------------------------------------------------------------

def _check_keys(block_name, block, allowed):
    unknown = set(block) - allowed
    if unknown:
        raise ConfigError(
            f"unknown keys in {block_name!r}: {sorted(unknown)}; "
            f"allowed: {sorted(allowed)} (unit suffixes are part of the key)")


def validate_config(cfg):
    if not isinstance(cfg, dict):
        raise ConfigError("config root must be a mapping")
    _check_keys("config", cfg, set(_SCHEMA))
    for block, allowed in _SCHEMA.items():
        if block in cfg:
            if not isinstance(cfg[block], dict):
                raise ConfigError(f"{block!r} must be a mapping")
            _check_keys(block, cfg[block], allowed)
    exp = cfg.get("experiment", {})
    kind = exp.get("kind")
    if kind not in KINDS:
        raise ConfigError(f"experiment.kind must be one of {KINDS}, got {kind!r}")
    for sub, allowed in _EXPERIMENT_SCHEMA.items():
        if sub in exp:
            if not isinstance(exp[sub], dict):
                raise ConfigError(f"experiment.{sub} must be a mapping")
            _check_keys(f"experiment.{sub}", exp[sub], allowed)
    return cfg


def load_config_file(path):
    with open(path, "r", encoding="utf-8") as fh:
        text = fh.read()
    if path.endswith(".json"):
        return json.loads(text)
    return yaml.safe_load(text)


def merge_configs(base, override):
    out = dict(base)
    for key, val in override.items():
        if isinstance(val, dict) and isinstance(out.get(key), dict):
            out[key] = merge_configs(out[key], val)
        else:
            out[key] = val
    return out


def params_from_config(cfg):
    s = cfg["system"]
    omega_r = s.get("omega_r_ghz")
    if omega_r is None:
        omega_r = s["omega_c_ghz"] + s["omega_h_ghz"]
    return model.SystemParams(
        osc_c=model.OscillatorParams(s["omega_c_ghz"], s["kappa_c_ghz"],
                                     s["t_cold_mk"], s["lambda_c"]),
        osc_h=model.OscillatorParams(s["omega_h_ghz"], s["kappa_h_ghz"],
                                     s["t_hot_mk"], s["lambda_h"]),
        osc_r=model.OscillatorParams(omega_r, s["kappa_r_ghz"],
                                     s["t_room_mk"], s["lambda_r"]),
        ej=s["ej_ghz"], phi=s["phi_rad"],
        dims=tuple(cfg["solver"]["dims"]))


# ---------------------------------------------------------------------------
# output writers
# ---------------------------------------------------------------------------

def _fmt(x):
    if x is None:
        return "nan"
    if isinstance(x, float) and math.isnan(x):
        return "nan"
    return f"{x:.12g}"


def _config_header(cfg, extra=None):
    meta = {"config": cfg}
    if extra:
        meta.update(extra)
    return "# " + json.dumps(meta, sort_keys=True, default=str)


def _json_default(x):
    if isinstance(x, (np.floating, np.integer)):
        return x.item()
    if isinstance(x, np.ndarray):
        return x.tolist()
    if isinstance(x, float) and (math.isinf(x) or math.isnan(x)):
        return None
    return str(x)


def _sanitize(obj):
    """Make a structure strict-JSON-safe (inf/nan -> None)."""
    if isinstance(obj, dict):
        return {k: _sanitize(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_sanitize(v) for v in obj]
    if isinstance(obj, (np.floating, np.integer)):
        obj = obj.item()
    if isinstance(obj, float) and (math.isinf(obj) or math.isnan(obj)):
        return None
    return obj


def write_summary(outdir, payload):
    path = os.path.join(outdir, "summary.json")
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(_sanitize(payload), fh, indent=2, sort_keys=True,
                  default=_json_default)
        fh.write("\n")
    return path


def write_trajectory_csv(outdir, traj, params, cfg, name="trajectory.csv"):
    kappa_c = 2.0 * math.pi * params.kappa("c")
    cols = ["t_ns", "t_kappa_c", "phi_rad", "n_c", "n_h", "n_r",
            "theta_c_mk", "theta_c_entropy_mk", "J_c", "J_h", "J_r"]
    aw = {lab: traj.current_aw(lab, params) for lab in ("c", "h", "r")}
    path = os.path.join(outdir, name)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(_config_header(cfg, {"units": {
            "t_ns": "ns", "t_kappa_c": "dimensionless (t * kappa_c, angular)",
            "phi_rad": "rad", "n_*": "mean photon number",
            "theta_*": "mK", "J_*": "attowatt (positive: bath -> oscillator)",
        }}) + "\n")
        fh.write(",".join(cols) + "\n")
        for k in range(len(traj.times)):
            row = [traj.times[k], traj.times[k] * kappa_c, traj.phi[k],
                   traj.mean_n["c"][k], traj.mean_n["h"][k], traj.mean_n["r"][k],
                   traj.theta_c_mk[k], traj.theta_c_entropy_mk[k],
                   aw["c"][k], aw["h"][k], aw["r"][k]]
            fh.write(",".join(_fmt(v) for v in row) + "\n")
    return path


def write_sweep_csv(outdir, points, base_params, cfg):
    cols = ["param_value", "theta_c_mk", "ratio", "J_c", "J_h", "J_r",
            "cop_current", "cop_freq", "residual"]
    t_c = base_params.temperature("c")
    path = os.path.join(outdir, "sweep.csv")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(_config_header(cfg, {"units": {
            "theta_c_mk": "mK", "ratio": "theta_c / T_c",
            "J_*": "attowatt", "residual": "||L(rho)||_F"}}) + "\n")
        fh.write(",".join(cols) + "\n")
        for pt in points:
            if pt.report is None:
                row = [pt.value] + [math.nan] * 8
            else:
                rep = pt.report
                row = [pt.value, rep.theta_energy_mk, rep.theta_energy_mk / t_c,
                       rep.currents_attowatt["c"], rep.currents_attowatt["h"],
                       rep.currents_attowatt["r"], rep.cop_current,
                       rep.cop_frequency, pt.residual]
            fh.write(",".join(_fmt(v) for v in row) + "\n")
    return path


def write_populations_csv(outdir, tables, cfg):
    """Fock populations of reduced states vs their thermal references."""
    path = os.path.join(outdir, "populations.csv")
    cols = ["n"] + [k for k in tables]
    length = max(len(v) for v in tables.values())
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(_config_header(cfg) + "\n")
        fh.write(",".join(cols) + "\n")
        for n in range(length):
            row = [n] + [tables[k][n] if n < len(tables[k]) else 0.0
                         for k in tables]
            fh.write(",".join(_fmt(v) if isinstance(v, float) else str(v)
                              for v in row) + "\n")
    return path


# ---------------------------------------------------------------------------
# experiment runners
# ---------------------------------------------------------------------------

def _resolve_dims(cfg, params):
    solver = cfg["solver"]
    if solver.get("auto_truncate"):
        cert = dynamics.certify_truncation(
            params, step=int(solver.get("truncate_step", 2)),
            tol=float(solver.get("truncate_tol", 5e-3)),
            max_product=int(solver.get("max_product", 400000)))
        return params.with_changes(dims=cert.dims), list(cert.dims)
    return params, list(params.dims)


def _steady(params, cfg):
    liouv = build_liouvillian(build_h_rwa(params), params)
    res = dynamics.steady_state(liouv, tol=cfg["solver"].get("steady_tol"),
                                params=params)
    rep = res.report()
    t_c = params.temperature("c")
    return res, {
        "kind": "steady",
        "theta_c_mk": rep.theta_energy_mk,
        "ratio": rep.theta_energy_mk / t_c,
        "report": rep.to_dict(),
        "residual": res.residual,
        "solver": {"method": res.method, "iterations": res.iterations,
                   "clipped_weight": res.clipped_weight},
    }


def run_experiment(cfg, workers=1):
    """Execute the configured experiment; returns (summary dict, files dict)."""
    params = params_from_config(cfg)
    params, dims = _resolve_dims(cfg, params)
    cfg = merge_configs(cfg, {"solver": {"dims": dims}})
    kind = cfg["experiment"]["kind"]
    solver = cfg["solver"]
    rtol, atol = float(solver["rtol"]), float(solver["atol"])
    files = {}

    if kind == "steady":
        _res, summary = _steady(params, cfg)

    elif kind == "schedule":
        sc = cfg["experiment"].get("schedule", {})
        pts = int(sc.get("points_per_segment", 100))
        if "segments" in sc:
            sched = protocols.Schedule(
                [(seg["phi_rad"], seg["duration_ns"]) for seg in sc["segments"]],
                pts)
        else:
            oo = sc.get("on_off", {"on_kappa": 3.0, "off_kappa": 3.0, "cycles": 2})
            sched = protocols.on_off_schedule(params, oo.get("on_kappa", 3.0),
                                              oo.get("off_kappa", 3.0),
                                              int(oo.get("cycles", 2)), pts)
        traj = protocols.run_schedule(sched, params, rtol=rtol, atol=atol)
        summary = {
            "kind": "schedule",
            "theta_c_final_mk": float(traj.theta_c_mk[-1]),
            "theta_c_min_mk": float(traj.theta_c_mk.min()),
            "points": len(traj.times),
            "diagnostics": traj.diagnostics,
        }
        files["trajectory"] = ("trajectory", traj)

    elif kind == "transient":
        tr = cfg["experiment"].get("transient", {})
        result = protocols.transient_protocol(
            params, horizon_kappa=float(tr.get("horizon_kappa", 6.0)),
            off_horizon_kappa=float(tr.get("off_horizon_kappa", 10.0)),
            rel_margin=float(tr.get("rel_margin", 1e-3)),
            rtol=rtol, atol=atol)
        summary = {
            "kind": "transient",
            "qualified": result.qualified,
            "steady_theta_on_mk": result.steady_theta_on_mk,
            "t_min_ns": result.t_min_ns,
            "theta_min_mk": result.theta_min_mk,
            "below_window_ns": result.below_window_ns,
            "crossed_back": result.crossed_back,
            "detection_resolution_ns": result.detection_resolution_ns,
        }
        files["trajectory"] = ("trajectory", result.trajectory)

    elif kind == "sweep":
        sw = cfg["experiment"]["sweep"]
        if "values" in sw:
            values = np.asarray(sw["values"], dtype=float)
        else:
            num = int(sw["num"])
            if sw.get("spacing", "linear") == "log":
                values = np.geomspace(float(sw["start"]), float(sw["stop"]), num)
            else:
                values = np.linspace(float(sw["start"]), float(sw["stop"]), num)
        spec = protocols.SweepSpec(sw["param"], values, params,
                                   auto_dims=bool(sw.get("auto_dims", True)),
                                   steady_tol=solver.get("steady_tol"))
        points = protocols.sweep(spec, workers=workers)
        summary = {
            "kind": "sweep",
            "param": sw["param"],
            "n_points": len(points),
            "n_failed": sum(1 for p in points if p.error),
            "theta_c_mk": [p.theta_c_mk for p in points],
            "values": values.tolist(),
            "errors": {str(p.value): p.error for p in points if p.error},
        }
        files["sweep"] = ("sweep", points)

    elif kind == "fit":
        ft = cfg["experiment"].get("fit", {})
        mode = ft.get("mode", "on")
        span_kappa = float(ft.get("span_kappa", 1.5))
        pts = int(ft.get("points", 60))
        tau = 1.0 / (2.0 * math.pi * params.kappa("c"))
        phi = math.pi / 2 if mode == "on" else 0.0
        sched = protocols.Schedule([(phi, span_kappa * tau)], pts)
        reference = protocols.run_schedule(sched, params, rtol=rtol, atol=atol)
        fit = protocols.fit_simplified(reference, params, mode=mode, rtol=rtol)
        summary = {
            "kind": "fit",
            "mode": mode,
            "coupling_ghz": fit.coupling_ghz,
            "ratio_to_ej": fit.ratio_to_ej,
            "residual": fit.residual,
            "evaluations": fit.evaluations,
        }

    elif kind == "rwa":
        rw = cfg["experiment"].get("rwa", {})
        comp = protocols.rwa_comparison(
            params, on_kappa=float(rw.get("on_kappa", 1.5)),
            off_kappa=float(rw.get("off_kappa", 1.0)),
            points_per_segment=int(rw.get("points_per_segment", 80)),
            rtol=rtol, atol=atol)
        summary = {
            "kind": "rwa",
            "max_rel_deviation": comp.max_rel_deviation,
            "mean_rel_deviation": comp.mean_rel_deviation,
            "theta_end_on_rwa_mk": comp.theta_end_on_rwa_mk,
            "theta_end_on_full_mk": comp.theta_end_on_full_mk,
            "rwa_cools_at_least_as_strongly":
                comp.theta_end_on_rwa_mk <= comp.theta_end_on_full_mk + 1e-9,
        }
        files["trajectory"] = ("trajectory", comp.trajectory_rwa)
        files["trajectory_full"] = ("trajectory_full", comp.trajectory_full)

    elif kind == "thermality":
        tables = {}
        metrics = {}
        for tag, phi in (("on", math.pi / 2), ("off", 0.0)):
            p = params.with_changes(phi=phi)
            liouv = build_liouvillian(build_h_rwa(p), p)
            res = dynamics.steady_state(liouv, params=p)
            pops = res.populations("c")
            tvd, pops_vec, ref = thermo.thermality_distance(
                np.diag(pops.astype(complex)), p.omega("c"))
            theta_e = res.theta_c()
            theta_s = thermo.temperature_from_entropy(
                np.clip(pops, 0.0, None), p.omega("c"))
            tables[f"p_reduced_{tag}"] = list(pops_vec)
            tables[f"p_thermal_{tag}"] = list(ref)
            metrics[tag] = {"tvd": tvd, "theta_energy_mk": theta_e,
                            "theta_entropy_mk": theta_s,
                            "rel_theta_gap": abs(theta_s - theta_e) / theta_e}
        summary = {"kind": "thermality", "modes": metrics}
        files["populations"] = ("populations", tables)

    elif kind == "invariants":
        checks = validation.run_invariant_checks(params)
        summary = {
            "kind": "invariants",
            "n_checks": len(checks),
            "n_passed": sum(1 for _, ok, _ in checks if ok),
            "checks": [{"name": n, "passed": ok, "detail": d}
                       for n, ok, d in checks],
        }

    else:  # pragma: no cover - guarded by validate_config
        raise ConfigError(f"unhandled experiment kind {kind!r}")

    summary["config"] = cfg
    summary["dims"] = dims
    summary["warnings"] = list(params.warnings)
    return params, summary, files


# ---------------------------------------------------------------------------
# argument parsing and dispatch
# ---------------------------------------------------------------------------

def _add_common(p):
    p.add_argument("--preset", default=None, help="preset name (see `presets list`)")
    p.add_argument("--config", default=None, help="YAML or JSON config file")
    p.add_argument("--phi", type=float, default=None, help="override phase bias (rad)")
    p.add_argument("--ej-ghz", type=float, default=None, help="override E_J (GHz)")
    p.add_argument("--t-hot-mk", type=float, default=None, help="override T_h (mK)")
    p.add_argument("--dims", default=None, help="override truncations, e.g. 10,12,10")
    p.add_argument("--auto-truncate", action="store_true",
                   help="certify truncations before running")
    p.add_argument("--out", default=None, help="output directory")
    p.add_argument("--workers", type=int, default=os.cpu_count() or 1)
    p.add_argument("--format", choices=("csv", "json", "both"), default="both")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="bosonic-fridge",
        description="Three-oscillator Josephson absorption refrigerator simulator")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, desc in (("steady", "solve the steady state and report"),
                       ("evolve", "run a switching schedule"),
                       ("sweep", "steady-state parameter sweep"),
                       ("fit", "fit the simplified-model coupling")):
        _add_common(sub.add_parser(name, help=desc))
    p_prot = sub.add_parser("protocol", help="timed protocols")
    p_prot.add_argument("what", choices=("transient",))
    _add_common(p_prot)
    p_val = sub.add_parser("validate", help="validation runs")
    p_val.add_argument("what", choices=("rwa", "thermality", "invariants"))
    _add_common(p_val)
    p_pre = sub.add_parser("presets", help="preset utilities")
    p_pre.add_argument("what", choices=("list",))
    return parser


_COMMAND_KIND = {"steady": "steady", "evolve": "schedule", "sweep": "sweep",
                 "fit": "fit"}


def _resolve_cli_config(args):
    preset = args.preset
    if preset is None and args.config is None:
        preset = "table1"
    cfg = presets.preset_config(preset) if preset else presets.preset_config("table1")
    if args.config:
        cfg = merge_configs(cfg, load_config_file(args.config))
    if args.command in _COMMAND_KIND:
        kind = _COMMAND_KIND[args.command]
    else:
        kind = args.what if args.command == "validate" else "transient"
        kind = {"rwa": "rwa", "thermality": "thermality",
                "invariants": "invariants", "transient": "transient"}[kind]
    cfg["experiment"]["kind"] = kind
    over = {}
    if args.phi is not None:
        over.setdefault("system", {})["phi_rad"] = args.phi
    if args.ej_ghz is not None:
        over.setdefault("system", {})["ej_ghz"] = args.ej_ghz
    if args.t_hot_mk is not None:
        over.setdefault("system", {})["t_hot_mk"] = args.t_hot_mk
    if args.dims is not None:
        try:
            dims = [int(x) for x in args.dims.split(",")]
        except ValueError:
            raise ConfigError(f"--dims expects C,H,R integers, got {args.dims!r}")
        over.setdefault("solver", {})["dims"] = dims
    if args.auto_truncate:
        over.setdefault("solver", {})["auto_truncate"] = True
    if args.out is not None:
        over.setdefault("output", {})["directory"] = args.out
    if args.format != "both":
        over.setdefault("output", {})["formats"] = [args.format]
    cfg = merge_configs(cfg, over)
    return validate_config(cfg)


def _emit_error(kind, exc):
    record = {"error": kind, "type": type(exc).__name__, "message": str(exc)}
    print(json.dumps(record, sort_keys=True), file=sys.stderr)


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "presets":
        for name in presets.preset_names():
            print(f"{name:12s} {presets.preset_description(name)}")
        return 0
    try:
        cfg = _resolve_cli_config(args)
        params_from_config(cfg)  # early validation of physical parameters
    except (ConfigError, ValueError, KeyError, OSError) as exc:
        _emit_error("validation", exc)
        return 2
    outdir = (cfg["output"].get("directory") or os.environ.get(ENV_OUT)
              or os.path.join("runs", cfg["experiment"]["kind"]))
    formats = cfg["output"].get("formats", ["csv", "json"])
    try:
        params, summary, files = run_experiment(cfg, workers=args.workers)
    except (ConfigError, ValueError) as exc:
        _emit_error("validation", exc)
        return 2
    except (SteadyStateError, StiffnessError, CertificationError, FitError,
            TruncationError, MemoryError) as exc:
        _emit_error("solver", exc)
        return 3
    os.makedirs(outdir, exist_ok=True)
    written = []
    if "json" in formats:
        written.append(write_summary(outdir, summary))
    if "csv" in formats:
        for key, (tag, payload) in files.items():
            if tag in ("trajectory", "trajectory_full"):
                written.append(write_trajectory_csv(outdir, payload, params, cfg,
                                                    name=f"{key}.csv"))
            elif tag == "sweep":
                written.append(write_sweep_csv(outdir, payload, params, cfg))
            elif tag == "populations":
                written.append(write_populations_csv(outdir, payload, cfg))
    _print_headline(summary)
    for path in written:
        print(f"wrote {path}")
    if summary.get("kind") == "invariants" and \
            summary["n_passed"] != summary["n_checks"]:
        return 3
    return 0


def _print_headline(summary):
    kind = summary.get("kind")
    if kind == "steady":
        print(f"theta_c = {summary['theta_c_mk']:.3f} mK "
              f"(ratio {summary['ratio']:.4f}, residual {summary['residual']:.2e})")
    elif kind == "schedule":
        print(f"schedule: final theta_c = {summary['theta_c_final_mk']:.3f} mK, "
              f"min {summary['theta_c_min_mk']:.3f} mK")
    elif kind == "transient":
        if summary["qualified"]:
            print(f"transient: theta_min = {summary['theta_min_mk']:.3f} mK at "
                  f"t = {summary['t_min_ns']:.2f} ns, below T_c^S for "
                  f"{summary['below_window_ns']:.2f} ns")
        else:
            print("transient: no qualifying minimum below the steady temperature")
    elif kind == "sweep":
        print(f"sweep over {summary['param']}: {summary['n_points']} points, "
              f"{summary['n_failed']} failed")
    elif kind == "fit":
        print(f"fit[{summary['mode']}]: coupling = {summary['coupling_ghz']:.6g} GHz "
              f"(ratio to E_J {summary['ratio_to_ej']:.4f})")
    elif kind == "rwa":
        print(f"rwa check: max rel deviation {summary['max_rel_deviation']:.3%}, "
              f"mean {summary['mean_rel_deviation']:.3%}")
    elif kind == "thermality":
        on = summary["modes"]["on"]
        print(f"thermality(on): TVD = {on['tvd']:.4f}, "
              f"theta_S vs theta_E gap {on['rel_theta_gap']:.3%}")
    elif kind == "invariants":
        print(f"invariants: {summary['n_passed']}/{summary['n_checks']} checks passed")


if __name__ == "__main__":
    sys.exit(main())
