"""Physical parameters and every Hamiltonian variant of the refrigerator.

Unit conventions
----------------
User-facing numbers follow the hardware datasheet style: ordinary
frequencies in GHz (i.e. Omega/2pi), temperatures in mK, phases in rad,
zero-point amplitudes dimensionless.  Internally all energies are
angular frequencies in rad/ns (multiply GHz by 2pi) and time is in ns,
with hbar = k_B = 1.  Temperature enters only through k_B/h =
20.836619 GHz/K.
"""

import math
import warnings
from dataclasses import dataclass, replace

import numpy as np
import scipy.sparse as sp

from . import fock
from .errors import DimensionError
from .fock import FockSpace, Operator, embed

KB_OVER_H_GHZ_PER_K = 20.836619
RESISTANCE_QUANTUM_OHM = 25812.807  # h/e^2
PLANCK_JS = 6.62607015e-34
TWO_PI = 2.0 * math.pi

DEFAULT_DIMS = (10, 12, 10)
RESONANCE_TOL = 1e-9
WEAK_COUPLING_FACTOR = 0.25


def thermal_x(omega_ghz, temperature_mk):
    """Dimensionless Omega/(k_B T) for an ordinary frequency in GHz."""
    if temperature_mk <= 0:
        return math.inf
    return omega_ghz / (KB_OVER_H_GHZ_PER_K * temperature_mk * 1e-3)


def bose_occupation(omega_ghz, temperature_mk):
    """Bath occupation n_B = 1/(exp(Omega/k_B T) - 1); exactly 0 at T = 0."""
    if omega_ghz <= 0:
        raise ValueError(f"need omega > 0, got {omega_ghz}")
    if temperature_mk < 0:
        raise ValueError(f"need temperature >= 0, got {temperature_mk}")
    x = thermal_x(omega_ghz, temperature_mk)
    if x > 700:
        return 0.0
    return 1.0 / math.expm1(x)


def lambda_from_impedance(impedance_ohm):
    """Zero-point phase amplitude sqrt(pi Z / R_Q) of a resonator."""
    if impedance_ohm <= 0:
        raise ValueError(f"need impedance > 0, got {impedance_ohm}")
    return math.sqrt(math.pi * impedance_ohm / RESISTANCE_QUANTUM_OHM)


@dataclass(frozen=True)
class OscillatorParams:
    """One LC mode: frequency and damping in GHz, bath temperature in mK,
    dimensionless zero-point phase amplitude."""

    omega: float
    kappa: float
    temperature: float
    lam: float

    def __post_init__(self):
        if self.omega <= 0:
            raise ValueError(f"omega must be > 0, got {self.omega}")
        if self.kappa < 0:
            raise ValueError(f"kappa must be >= 0, got {self.kappa}")
        if self.temperature < 0:
            raise ValueError(f"temperature must be >= 0, got {self.temperature}")
        if self.lam <= 0:
            raise ValueError(f"lambda must be > 0, got {self.lam}")

    @property
    def nbar(self):
        return bose_occupation(self.omega, self.temperature)


@dataclass(frozen=True)
class SystemParams:
    """Full refrigerator parameter set (three oscillators + junction)."""

    osc_c: OscillatorParams
    osc_h: OscillatorParams
    osc_r: OscillatorParams
    ej: float
    phi: float
    dims: tuple = DEFAULT_DIMS

    def __post_init__(self):
        object.__setattr__(self, "dims", tuple(int(d) for d in self.dims))
        if len(self.dims) != 3:
            raise DimensionError(f"need three mode dimensions, got {self.dims}")
        if self.ej < 0:
            raise ValueError(f"ej must be >= 0, got {self.ej}")
        resid = abs(self.osc_r.omega - self.osc_c.omega - self.osc_h.omega)
        if resid / self.osc_r.omega > RESONANCE_TOL:
            raise ValueError(
                f"resonance violated: |omega_r - omega_c - omega_h|/omega_r = "
                f"{resid / self.osc_r.omega:.3e} > {RESONANCE_TOL}")
        warns = []
        bound = WEAK_COUPLING_FACTOR * min(o.omega for o in self.oscillators.values())
        if self.ej >= bound:
            warns.append(f"E_J = {self.ej} GHz is not << min(omega) (bound {bound} GHz)")
        for lab, osc in self.oscillators.items():
            if osc.kappa >= bound:
                warns.append(f"kappa_{lab} = {osc.kappa} GHz is not << min(omega)")
        object.__setattr__(self, "warnings", tuple(warns))

    @property
    def oscillators(self):
        return {"c": self.osc_c, "h": self.osc_h, "r": self.osc_r}

    def osc(self, label):
        return self.oscillators[label]

    def omega(self, label):
        return self.osc(label).omega

    def kappa(self, label):
        return self.osc(label).kappa

    def temperature(self, label):
        return self.osc(label).temperature

    def lam(self, label):
        return self.osc(label).lam

    def nbar(self, label):
        return self.osc(label).nbar

    def space(self):
        return FockSpace(self.dims)

    # convenience clones used by sweeps and presets -------------------------
    def with_changes(self, *, ej=None, phi=None, dims=None, t_hot=None,
                     t_cold=None, t_room=None, lam=None, kappa=None):
        p = self
        if ej is not None:
            p = replace(p, ej=ej)
        if phi is not None:
            p = replace(p, phi=phi)
        if dims is not None:
            p = replace(p, dims=tuple(dims))
        if t_hot is not None:
            p = replace(p, osc_h=replace(p.osc_h, temperature=t_hot))
        if t_cold is not None:
            p = replace(p, osc_c=replace(p.osc_c, temperature=t_cold))
        if t_room is not None:
            p = replace(p, osc_r=replace(p.osc_r, temperature=t_room))
        if lam is not None:
            p = replace(p, osc_c=replace(p.osc_c, lam=lam),
                        osc_h=replace(p.osc_h, lam=lam),
                        osc_r=replace(p.osc_r, lam=lam))
        if kappa is not None:
            p = replace(p, osc_c=replace(p.osc_c, kappa=kappa),
                        osc_h=replace(p.osc_h, kappa=kappa),
                        osc_r=replace(p.osc_r, kappa=kappa))
        return p


def make_params(omega_c=1.0, omega_h=4.5, kappa_c=0.01, kappa_h=0.01,
                kappa_r=0.025, t_cold=50.0, t_hot=768.0, t_room=50.0,
                lam=0.3, ej=0.2, phi=math.pi / 2, dims=DEFAULT_DIMS):
    """Build a parameter set with omega_r = omega_c + omega_h by construction."""
    return SystemParams(
        osc_c=OscillatorParams(omega_c, kappa_c, t_cold, lam),
        osc_h=OscillatorParams(omega_h, kappa_h, t_hot, lam),
        osc_r=OscillatorParams(omega_c + omega_h, kappa_r, t_room, lam),
        ej=ej, phi=phi, dims=dims)


# ---------------------------------------------------------------------------
# Hamiltonian builders (all return angular units, rad/ns)
# ---------------------------------------------------------------------------

def _lowering_block(params, space, label, k):
    """Single-mode A(k) a^k for one oscillator, embedded in the composite space."""
    d = space.dim_of(label)
    a = fock.annihilation(d)
    ak = a
    for _ in range(k - 1):
        ak = ak @ a
    block = fock.a_nonlinear(k, params.lam(label), d) @ ak if k else fock.a_nonlinear(0, params.lam(label), d)
    return embed(block, label, space)


def _interaction_term(params, space, k):
    """T_k = (a_r†)^k A_c(k) A_h(k) A_r(k) a_h^k a_c^k on the composite space (sparse)."""
    bc = _lowering_block(params, space, "c", k)
    bh = _lowering_block(params, space, "h", k)
    br = _lowering_block(params, space, "r", k)
    return (br.dag() @ bc @ bh).matrix


def build_h_on(params, space=None):
    """Resonant single-photon conversion Hamiltonian (fridge 'on')."""
    space = space or params.space()
    t1 = _interaction_term(params, space, 1)
    m = -TWO_PI * params.ej * (t1 + t1.conj().T)
    return Operator(m, space, herm=True)


def build_h_off(params, space=None):
    """Two-photon conversion Hamiltonian (fridge 'off')."""
    space = space or params.space()
    t2 = _interaction_term(params, space, 2)
    m = TWO_PI * params.ej * (t2 + t2.conj().T)
    return Operator(m, space, herm=True)


def build_h_rwa(params, space=None):
    """sin(phi) H_on + cos(phi) H_off."""
    space = space or params.space()
    h = math.sin(params.phi) * build_h_on(params, space).matrix \
        + math.cos(params.phi) * build_h_off(params, space).matrix
    return Operator(h, space, herm=True)


def build_rwa_series(params, space=None, k_max=2, include_k0=False):
    """Rotating-frame resonant series truncated at photon order k_max.

    Odd orders k = 2m-1 enter H_on with sign (-1)^m, even orders k = 2m
    enter H_off with sign (-1)^(m+1); the k = 0 diagonal term (constant
    photon number) is added only when include_k0 is set.
    """
    space = space or params.space()
    if k_max < 1:
        raise ValueError(f"need k_max >= 1, got {k_max}")
    if k_max >= min(space.dims):
        warnings.warn(f"k_max={k_max} exceeds a mode dimension; highest terms vanish "
                      f"identically on dims {space.dims}", stacklevel=2)
    ej = TWO_PI * params.ej
    d = space.dim
    h_on = sp.csr_matrix((d, d), dtype=complex)
    h_off = sp.csr_matrix((d, d), dtype=complex)
    for k in range(1, k_max + 1):
        t = _interaction_term(params, space, k)
        t = t + t.conj().T
        if k % 2:  # k = 2m - 1
            m = (k + 1) // 2
            h_on = h_on + ej * (-1.0) ** m * t
        else:  # k = 2m
            m = k // 2
            h_off = h_off + ej * (-1.0) ** (m + 1) * t
    if include_k0:
        t0 = _interaction_term(params, space, 0)
        h_off = h_off + ej * (-1.0) * (t0 + t0.conj().T)
    h = math.sin(params.phi) * h_on + math.cos(params.phi) * h_off
    return Operator(h, space, herm=True)


def build_h_full(params, space=None):
    """Untruncated-cosine lab-frame Hamiltonian (dense).

    sum_a Omega_a n_a - E_J cos(2 phi_c + 2 phi_h + 2 phi_r + phi), the
    cosine assembled from the product of per-mode displacement-phase
    exponentials.
    """
    space = space or params.space()
    diag = np.zeros(space.dim)
    for lab in space.labels:
        diag = diag + TWO_PI * params.omega(lab) * space.mode_numbers(lab)
    w = np.ones((1, 1), dtype=complex)
    for lab in space.labels:
        u = fock.displacement_phase(params.lam(lab), space.dim_of(lab)).dense()
        w = np.kron(w, u)
    m = np.diag(diag.astype(complex)) \
        - TWO_PI * params.ej / 2.0 * (np.exp(1j * params.phi) * w
                                      + np.exp(-1j * params.phi) * w.conj().T)
    return Operator(m, space, herm=True)


def build_h_simplified(ej_prime, ej_doubleprime, space):
    """Bare-ladder on/off Hamiltonians with fitted couplings (GHz inputs)."""
    ac, ah, ar = (embed(fock.annihilation(space.dim_of(lab)), lab, space)
                  for lab in ("c", "h", "r"))
    t1 = (ar.dag() @ ac @ ah).matrix
    t2 = (ar.dag() @ ar.dag() @ ac @ ac @ ah @ ah).matrix
    h_on = Operator(-TWO_PI * ej_prime * (t1 + t1.conj().T), space, herm=True)
    h_off = Operator(TWO_PI * ej_doubleprime * (t2 + t2.conj().T), space, herm=True)
    return h_on, h_off


def small_lambda_couplings(params):
    """Exact lambda->0 limits E_J' = 8 l_c l_h l_r E_J and E_J'' = 8 (l_c l_h l_r)^2 E_J."""
    prod = params.lam("c") * params.lam("h") * params.lam("r")
    return 8.0 * prod * params.ej, 8.0 * prod ** 2 * params.ej
