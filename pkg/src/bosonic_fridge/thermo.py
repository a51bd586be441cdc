"""Thermodynamic observables: temperatures, heat currents, COP, bounds.

Two temperature assignments are implemented for the (generally
non-thermal) reduced oscillator states: matching the mean energy of a
thermal state (the default everywhere) and matching its von Neumann
entropy.  Heat currents follow J_a = Omega_a kappa_a (n_B^a - <n_a>),
positive from bath to oscillator.
"""

import math
from dataclasses import dataclass, asdict

import numpy as np

from . import model
from .errors import TruncationError

CURRENT_FLOOR = 1e-30


def temperature_from_energy(mean_n, omega_ghz):
    """Temperature (mK) of the thermal state with mean occupation mean_n."""
    if mean_n < 0:
        raise ValueError(f"need mean_n >= 0, got {mean_n}")
    if mean_n == 0:
        return 0.0
    t_k = (omega_ghz / model.KB_OVER_H_GHZ_PER_K) / math.log1p(1.0 / mean_n)
    return t_k * 1e3


def thermal_populations(nbar, dim):
    """Geometric Fock populations of a thermal state on a dim-level ladder."""
    if nbar <= 0:
        p = np.zeros(dim)
        p[0] = 1.0
        return p
    q = nbar / (1.0 + nbar)
    p = q ** np.arange(dim)
    return p / p.sum()


def shannon_entropy(populations):
    p = np.clip(np.asarray(populations, dtype=float), 0.0, None)
    nz = p[p > 0]
    return float(-(nz * np.log(nz)).sum())


def von_neumann_entropy(rho):
    """S(rho) = -tr rho ln rho with eigenvalues clipped at 0."""
    rho = np.asarray(rho)
    w = np.linalg.eigvalsh(0.5 * (rho + rho.conj().T))
    return shannon_entropy(w)


def fock_populations(rho_reduced):
    return np.diag(np.asarray(rho_reduced)).real


def temperature_from_entropy(rho_reduced, omega_ghz, tol=1e-10):
    """Temperature (mK) of the same-entropy thermal state on the same ladder.

    Bisects T in the monotone map T -> S(thermal(T)) built on the input's
    truncated dimension, so truncation never injects artificial entropy
    mismatch.
    """
    rho_reduced = np.asarray(rho_reduced)
    dim = rho_reduced.shape[0]
    target = von_neumann_entropy(rho_reduced) if rho_reduced.ndim == 2 \
        else shannon_entropy(rho_reduced)
    if target <= 0.0:
        return 0.0
    s_max = math.log(dim)
    if target > s_max - 1e-12:
        raise TruncationError(
            f"entropy {target:.6f} exceeds max entropy ln({dim}) = {s_max:.6f} "
            f"of the truncated ladder; enlarge the truncation")

    def entropy_at(t_mk):
        return shannon_entropy(
            thermal_populations(model.bose_occupation(omega_ghz, t_mk), dim))

    t_hi = temperature_from_energy(1.0, omega_ghz)
    while entropy_at(t_hi) < target:
        t_hi *= 2.0
        if t_hi > 1e12:
            raise TruncationError("entropy bisection bracket blew up")
    t_lo = 0.0
    while t_hi - t_lo > 1e-14 * max(t_hi, 1.0):
        t_mid = 0.5 * (t_lo + t_hi)
        s_mid = entropy_at(t_mid)
        if abs(s_mid - target) <= tol:
            return t_mid
        if s_mid < target:
            t_lo = t_mid
        else:
            t_hi = t_mid
    return 0.5 * (t_lo + t_hi)


# ---------------------------------------------------------------------------
# heat currents
# ---------------------------------------------------------------------------

def heat_current(label, mean_n, params):
    """J_a = Omega_a kappa_a (n_B^a - <n_a>) in ordinary GHz^2 units."""
    osc = params.osc(label)
    return osc.omega * osc.kappa * (osc.nbar - mean_n)


def current_units(j_ghz2, params):
    """One current in the three reporting unit systems."""
    osc_c = params.osc("c")
    dimless = j_ghz2 / (osc_c.omega * osc_c.kappa)
    # photon energy h*nu times the angular-rate photon flux
    watts = model.PLANCK_JS * j_ghz2 * 1e18 * 2.0 * math.pi
    return {"dimensionless": dimless, "ghz2": j_ghz2, "attowatt": watts * 1e18}


def heat_current_interaction_traced(liouv, rho, h_interaction):
    """tr{H_int L_a(rho)} per bath: diagnostic companion to the J_a definition."""
    out = {}
    hm = h_interaction.matrix
    for b in liouv.baths:
        out[b.label] = float(np.real(np.trace(_dense(hm @ b.apply(np.asarray(rho))))))
    return out


def _dense(m):
    return m.toarray() if hasattr(m, "toarray") else np.asarray(m)


def heat_current_bath_traced(liouv, rho, params):
    """tr{(sum_b Omega_b n_b) L_a(rho)}: equals J_a algebraically (cross-check)."""
    space = liouv.space
    weights = np.zeros(space.dim)
    for lab in space.labels:
        weights = weights + params.omega(lab) * space.mode_numbers(lab)
    out = {}
    for b in liouv.baths:
        drho = b.apply(np.asarray(rho))
        # kappa in the bath is angular; convert the trace back to GHz^2
        out[b.label] = float(np.real(np.dot(weights, np.diag(drho)))) / (2.0 * math.pi)
    return out


def cop(j_c, j_h):
    """Current-ratio coefficient of performance, None below the numeric floor."""
    if abs(j_h) < CURRENT_FLOOR:
        return None
    return j_c / j_h


def cop_frequency(params):
    return params.omega("c") / params.omega("h")


def cooling_condition(params):
    """Second-law margin Omega_r/T_r - Omega_h/T_h - Omega_c/T_c (dimensionless)."""
    return (model.thermal_x(params.omega("r"), params.temperature("r"))
            - model.thermal_x(params.omega("h"), params.temperature("h"))
            - model.thermal_x(params.omega("c"), params.temperature("c")))


def carnot_cop(params):
    """(1 - T_r/T_h) / (T_r/T_c - 1); +inf when T_r = T_c."""
    t_r, t_c, t_h = (params.temperature(lab) for lab in ("r", "c", "h"))
    if t_r <= t_c:
        return math.inf
    return (1.0 - t_r / t_h) / (t_r / t_c - 1.0)


def thermality_distance(rho_reduced, omega_ghz):
    """Total variation distance of the Fock populations from the
    energy-matched thermal state on the same ladder; returns
    (tvd, populations, thermal_populations)."""
    rho_reduced = np.asarray(rho_reduced)
    pops = fock_populations(rho_reduced) if rho_reduced.ndim == 2 else rho_reduced
    dim = len(pops)
    mean_n = float(np.dot(pops, np.arange(dim)))
    theta = temperature_from_energy(mean_n, omega_ghz)
    ref = thermal_populations(model.bose_occupation(omega_ghz, theta) if theta > 0 else 0.0, dim)
    tvd = 0.5 * float(np.abs(pops - ref).sum())
    return tvd, pops, ref


# ---------------------------------------------------------------------------
# aggregated report
# ---------------------------------------------------------------------------

@dataclass
class ThermoReport:
    mean_n: dict
    theta_energy_mk: float
    theta_entropy_mk: float
    currents_ghz2: dict
    currents_dimensionless: dict
    currents_attowatt: dict
    currents_interaction_traced: dict
    cop_current: float
    cop_frequency: float
    cooling_margin: float
    carnot_cop: float
    thermality_tvd: float

    def to_dict(self):
        d = asdict(self)
        if math.isinf(d["carnot_cop"]):
            d["carnot_cop"] = None
            d["carnot_finite"] = False
        else:
            d["carnot_finite"] = True
        return d


def thermo_report(rho, params, liouv=None, space=None):
    """Full steady-state observable report for a dense density matrix."""
    from . import fock as _fock  # local import keeps module load order simple
    space = space or params.space()
    rho = np.asarray(rho)
    occ = {lab: space.mode_numbers(lab) for lab in space.labels}
    diag = np.diag(rho).real
    mean_n = {lab: float(np.dot(diag, occ[lab])) for lab in space.labels}
    theta_e = temperature_from_energy(mean_n["c"], params.omega("c"))
    rho_c = _fock.partial_trace(rho / np.trace(rho).real, "c", space)
    theta_s = temperature_from_entropy(rho_c, params.omega("c"))
    j = {lab: heat_current(lab, mean_n[lab], params) for lab in space.labels}
    units = {lab: current_units(val, params) for lab, val in j.items()}
    traced = {}
    if liouv is not None:
        h_int = liouv.hamiltonian
        if h_int is not None:
            traced = heat_current_interaction_traced(liouv, rho, h_int)
    tvd, _, _ = thermality_distance(rho_c, params.omega("c"))
    return ThermoReport(
        mean_n=mean_n,
        theta_energy_mk=theta_e,
        theta_entropy_mk=theta_s,
        currents_ghz2=j,
        currents_dimensionless={lab: units[lab]["dimensionless"] for lab in j},
        currents_attowatt={lab: units[lab]["attowatt"] for lab in j},
        currents_interaction_traced=traced,
        cop_current=cop(j["c"], j["h"]),
        cop_frequency=cop_frequency(params),
        cooling_margin=cooling_condition(params),
        carnot_cop=carnot_cop(params),
        thermality_tvd=tvd,
    )
