"""Self-contained invariant checks runnable from the command line.

Each check returns (name, passed, detail); the CLI's `validate
invariants` subcommand runs them all at the configured parameters.
"""

import numpy as np
import scipy.sparse as sp

from . import fock, model
from .lindblad import build_liouvillian, dissipator, vec


def _random_state(dim, rng, hermitian=True):
    m = rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))
    if hermitian:
        m = 0.5 * (m + m.conj().T)
        m = m / np.trace(m).real
    return m


def golden_dissipator_check():
    """Two-level D[a] entries pin the column-stacking convention."""
    a = fock.annihilation(2)
    got = dissipator(a).toarray()
    want = np.array([[0, 0, 0, 1],
                     [0, -0.5, 0, 0],
                     [0, 0, -0.5, 0],
                     [0, 0, 0, -1]], dtype=complex)
    err = np.abs(got - want).max()
    return "dissipator_golden_2level", err < 1e-14, f"max entry error {err:.2e}"


def trace_preservation_check(liouv, rng, n_states=20):
    worst = 0.0
    for _ in range(n_states):
        rho = _random_state(liouv.dim, rng)
        worst = max(worst, abs(np.trace(liouv.apply(rho)))
                    / np.linalg.norm(rho))
    return "trace_preservation", worst < 1e-10, f"max |tr L(rho)|/||rho|| = {worst:.2e}"


def hermiticity_preservation_check(liouv, rng, n_states=10):
    worst = 0.0
    for _ in range(n_states):
        rho = _random_state(liouv.dim, rng)
        img = liouv.apply(rho)
        worst = max(worst, np.abs(img - img.conj().T).max()
                    / max(np.abs(img).max(), 1e-300))
    return "hermiticity_preservation", worst < 1e-12, f"max defect {worst:.2e}"


def bath_decomposition_check(params):
    """Unitary part plus per-bath parts reproduces the assembled generator."""
    small = params.with_changes(dims=(3, 3, 3))
    liouv = build_liouvillian(model.build_h_rwa(small), small)
    total = liouv.superoperator
    parts = liouv.unitary_superoperator()
    for b in liouv.baths:
        parts = parts + b.superoperator()
    err = abs(total - parts).max() if (total - parts).nnz else 0.0
    return "bath_decomposition", err < 1e-14, f"max entry diff {err:.2e}"


def hamiltonian_hermiticity_check(params):
    worst = 0.0
    for builder in (model.build_h_on, model.build_h_off, model.build_h_rwa,
                    model.build_h_full):
        worst = max(worst, builder(params).hermiticity_defect())
    return "hamiltonian_hermiticity", worst < 1e-12, f"max defect {worst:.2e}"


def charge_conservation_check(params):
    space = params.space()
    h_on = model.build_h_on(params, space).matrix
    g1 = sp.diags((space.mode_numbers("c") - space.mode_numbers("h")).astype(float))
    en = sp.diags(sum(params.omega(lab) * space.mode_numbers(lab)
                      for lab in space.labels).astype(float))
    c1 = abs((g1 @ h_on - h_on @ g1))
    c2 = abs((en @ h_on - h_on @ en))
    worst = max(c1.max() if c1.nnz else 0.0, c2.max() if c2.nnz else 0.0)
    return "interaction_charge_conservation", worst < 1e-10, f"max |[G,H]| = {worst:.2e}"


def nonlinear_operator_oracle_check(lam=0.3, k_max=4, levels=10):
    """Closed-form dressed ladder diagonal vs matrix-exponential extraction."""
    u = fock.displacement_phase(lam, 40, method="expm").dense()
    worst = 0.0
    for k in range(k_max + 1):
        closed = fock.nonlinear_coefficients(k, lam, levels)
        for n in range(levels):
            ratio = 1.0
            for j in range(1, k + 1):
                ratio /= np.sqrt(n + j)
            oracle = (u[n + k, n] * (1j) ** (-k) * ratio).real
            worst = max(worst, abs(closed[n] - oracle))
    return "nonlinear_operator_oracle", worst < 1e-8, f"max |closed - expm| = {worst:.2e}"


def laguerre_recurrence_check(rng, trials=200):
    worst = 0.0
    for _ in range(trials):
        n = int(rng.integers(1, 30))
        k = int(rng.integers(0, 6))
        x = float(rng.uniform(0.0, 10.0))
        lhs = (n + 1) * fock.laguerre(n + 1, k, x)
        rhs = (2 * n + k + 1 - x) * fock.laguerre(n, k, x) \
            - (n + k) * fock.laguerre(n - 1, k, x)
        scale = max(abs(lhs), abs(rhs), 1.0)
        worst = max(worst, abs(lhs - rhs) / scale)
    return "laguerre_recurrence", worst < 1e-12, f"max rel defect {worst:.2e}"


def temperature_roundtrip_check():
    from .thermo import temperature_from_energy
    worst = 0.0
    for omega, t_mk in ((1.0, 50.0), (4.5, 768.0), (5.5, 50.0), (2.3, 120.0)):
        nb = model.bose_occupation(omega, t_mk)
        back = temperature_from_energy(nb, omega)
        worst = max(worst, abs(back - t_mk) / t_mk)
    return "temperature_roundtrip", worst < 1e-12, f"max rel error {worst:.2e}"


def run_invariant_checks(params, seed=1234):
    rng = np.random.default_rng(seed)
    small = params.with_changes(dims=(4, 5, 4))
    liouv = build_liouvillian(model.build_h_rwa(small), small)
    checks = [
        golden_dissipator_check(),
        trace_preservation_check(liouv, rng),
        hermiticity_preservation_check(liouv, rng),
        bath_decomposition_check(params),
        hamiltonian_hermiticity_check(params.with_changes(dims=(5, 6, 5))),
        charge_conservation_check(params.with_changes(dims=(6, 7, 6))),
        nonlinear_operator_oracle_check(),
        laguerre_recurrence_check(rng),
        temperature_roundtrip_check(),
    ]
    return checks
