"""Bundled run configurations reproducing the reference operating points."""

import copy

# k_B T_h = 8 * Omega_c for the weak-damping transient run
_T_HOT_8WC_MK = 8.0 / 20.836619 * 1e3

_BASE_SYSTEM = {
    "omega_c_ghz": 1.0,
    "omega_h_ghz": 4.5,
    "omega_r_ghz": 5.5,
    "kappa_c_ghz": 0.01,
    "kappa_h_ghz": 0.01,
    "kappa_r_ghz": 0.025,
    "t_cold_mk": 50.0,
    "t_hot_mk": 768.0,
    "t_room_mk": 50.0,
    "lambda_c": 0.3,
    "lambda_h": 0.3,
    "lambda_r": 0.3,
    "ej_ghz": 0.2,
    "phi_rad": 1.5707963267948966,
}

_BASE_SOLVER = {
    "dims": [10, 12, 10],
    "auto_truncate": False,
    "truncate_tol": 5e-3,
    "truncate_step": 2,
    "rtol": 1e-8,
    "atol": 1e-10,
    "steady_tol": None,
    "max_product": 400000,
}

_BASE_OUTPUT = {"directory": None, "formats": ["csv", "json"]}


def _cfg(system=None, solver=None, experiment=None):
    cfg = {
        "system": dict(_BASE_SYSTEM, **(system or {})),
        "solver": dict(_BASE_SOLVER, **(solver or {})),
        "experiment": experiment or {"kind": "steady"},
        "output": dict(_BASE_OUTPUT),
    }
    return cfg


_PRESETS = {
    "table1": (
        "steady-state cooling at the benchmark parameter point",
        _cfg(),
    ),
    "fig1b": (
        "on/off switching sawtooth of the cold-mode temperature",
        _cfg(experiment={
            "kind": "schedule",
            "schedule": {"on_off": {"on_kappa": 3.0, "off_kappa": 3.0,
                                    "cycles": 2},
                         "points_per_segment": 100},
        }),
    ),
    "fig2": (
        "steady temperature vs Josephson energy (log grid)",
        _cfg(experiment={
            "kind": "sweep",
            "sweep": {"param": "ej", "start": 0.02, "stop": 0.2,
                      "num": 12, "spacing": "log", "auto_dims": True},
        }),
    ),
    "fig2_inset": (
        "steady temperature vs hot-bath temperature (interior minimum)",
        _cfg(experiment={
            "kind": "sweep",
            "sweep": {"param": "t_hot", "start": 300.0, "stop": 1500.0,
                      "num": 15, "spacing": "linear", "auto_dims": True},
        }),
    ),
    "fig3": (
        "transient cooling with switch-off at the first minimum "
        "(weak damping, k_B T_h = 8 Omega_c)",
        _cfg(system={"kappa_c_ghz": 0.001, "kappa_h_ghz": 0.001,
                     "kappa_r_ghz": 0.001, "t_hot_mk": _T_HOT_8WC_MK},
             solver={"dims": [8, 10, 8]},
             experiment={"kind": "transient",
                         "transient": {"horizon_kappa": 6.0,
                                       "off_horizon_kappa": 10.0,
                                       "rel_margin": 1e-3}}),
    ),
    "appB": (
        "rotating-frame vs full-Hamiltonian comparison (T_h halved)",
        _cfg(system={"t_hot_mk": 384.0},
             solver={"dims": [6, 8, 6], "rtol": 1e-6, "atol": 1e-9},
             experiment={"kind": "rwa",
                         "rwa": {"on_kappa": 1.5, "off_kappa": 1.0,
                                 "points_per_segment": 80}}),
    ),
    "appC": (
        "thermality of the reduced cold-oscillator state (on and off)",
        _cfg(experiment={"kind": "thermality"}),
    ),
}


def preset_names():
    return list(_PRESETS)


def preset_description(name):
    return _PRESETS[name][0]


def preset_config(name):
    try:
        return copy.deepcopy(_PRESETS[name][1])
    except KeyError:
        raise KeyError(f"unknown preset {name!r}; available: {preset_names()}") from None
