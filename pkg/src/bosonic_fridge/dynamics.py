"""Time evolution and steady states of the master equation.

Evolution uses scipy's embedded Runge-Kutta 4(5) stepper on the
vectorized state with per-step re-Hermitization and trace
renormalization (drift logged).  When the Hamiltonian conserves the
refrigerator charges and the initial state is Fock-diagonal-compatible,
both evolution and the steady solve run on the equal-charge pair sector
instead of the full D^2 space; every result is still checked against
the full generator through its residual/invariants, so the reduction
cannot silently go wrong.
"""

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.integrate import RK45
from scipy.sparse.linalg import splu, spilu, lgmres, LinearOperator

from . import thermo
from ._sectors import sector_generator_for
from .errors import (CertificationError, ConvergenceError, DimensionError,
                     MultiplicityError, StiffnessError)
from .lindblad import vec, unvec
from .fock import partial_trace

DIRECT_SOLVE_MAX_SUPER_DIM = 2e5
DEFAULT_RTOL = 1e-8
DEFAULT_ATOL = 1e-10
CLIP_FLOOR = -1e-10


def thermal_product_state(params, space=None):
    """Dense tensor product of per-mode thermal states at the bath temperatures."""
    space = space or params.space()
    diag = np.ones(1)
    for lab in space.labels:
        diag = np.kron(diag, thermo.thermal_populations(params.nbar(lab),
                                                        space.dim_of(lab)))
    return np.diag(diag.astype(complex))


# ---------------------------------------------------------------------------
# run representation: full D^2 vector or charge-sector vector
# ---------------------------------------------------------------------------

class _RunContext:
    """State representation, RHS and observable extraction for one Liouvillian."""

    def __init__(self, liouv, rho0, params=None):
        self.liouv = liouv
        self.params = params
        self.space = liouv.space
        rho0 = np.asarray(rho0, dtype=complex)
        if rho0.shape != (self.space.dim, self.space.dim):
            raise DimensionError(f"initial state shape {rho0.shape} != space "
                                 f"dim {self.space.dim}")
        sector = sector_generator_for(liouv)
        if sector is not None:
            smap = sector[0]
            norm = np.linalg.norm(rho0)
            if smap.off_sector_mass(rho0) > 1e-12 * max(norm, 1e-300):
                sector = None
        self.sector = sector
        if sector is not None:
            self.smap, self.generator = sector
            self.y0 = self.smap.gather(rho0)
            self.path = "sector"
        else:
            self.smap, self.generator = None, None
            self.y0 = vec(rho0)
            self.path = "full"

    def rhs(self, _t, y):
        if self.generator is not None:
            return self.generator @ y
        return self.liouv.matvec(y)

    def hermitize(self, y):
        if self.smap is not None:
            return self.smap.hermitize(y)
        rho = unvec(y, self.space.dim)
        return vec(0.5 * (rho + rho.conj().T))

    def trace(self, y):
        if self.smap is not None:
            return self.smap.trace(y).real
        return float(np.trace(unvec(y, self.space.dim)).real)

    def to_dense(self, y):
        if self.smap is not None:
            return self.smap.scatter(y)
        return unvec(y, self.space.dim)

    def observables(self, y):
        """mean_n per mode and the reduced cold-mode populations (normalized)."""
        y = self.hermitize(y)
        tr = self.trace(y)
        if self.smap is not None:
            pops = self.smap.populations(y) / tr
            mean_n = {lab: float(np.dot(pops, self.space.mode_numbers(lab)[self.smap.diag_states]))
                      for lab in self.space.labels}
            pops_c = np.bincount(self.space.mode_numbers("c")[self.smap.diag_states],
                                 weights=pops, minlength=self.space.dim_of("c"))
            return mean_n, pops_c
        rho = unvec(y, self.space.dim) / tr
        diag = np.diag(rho).real
        mean_n = {lab: float(np.dot(diag, self.space.mode_numbers(lab)))
                  for lab in self.space.labels}
        pops_c = thermo.fock_populations(partial_trace(rho, "c", self.space))
        return mean_n, pops_c


# ---------------------------------------------------------------------------
# trajectories
# ---------------------------------------------------------------------------

@dataclass
class Trajectory:
    """Observable records along a run; states kept only when requested."""

    times: np.ndarray                  # ns
    phi: np.ndarray                    # rad
    mean_n: dict
    theta_c_mk: np.ndarray
    theta_c_entropy_mk: np.ndarray
    currents_ghz2: dict
    final_rho: np.ndarray = None
    states: list = None
    diagnostics: dict = field(default_factory=dict)

    def times_kappa_c(self, params):
        """Times in 1/kappa_c units (kappa_c angular)."""
        return self.times * (2.0 * math.pi * params.kappa("c"))

    def current_aw(self, label, params):
        return np.array([thermo.current_units(j, params)["attowatt"]
                         for j in self.currents_ghz2[label]])


def _assemble_trajectory(times, phi_values, records, params, final_rho, states,
                         diagnostics):
    mean_n = {lab: np.array([r[0][lab] for r in records])
              for lab in ("c", "h", "r")}
    theta = np.empty(len(records))
    theta_s = np.empty(len(records))
    for k, (mn, pops_c) in enumerate(records):
        theta[k] = thermo.temperature_from_energy(max(mn["c"], 0.0), params.omega("c"))
        theta_s[k] = thermo.temperature_from_entropy(np.clip(pops_c, 0.0, None),
                                                     params.omega("c"))
    currents = {lab: np.array([thermo.heat_current(lab, mn[lab], params)
                               for mn, _ in records]) for lab in ("c", "h", "r")}
    return Trajectory(times=np.asarray(times, dtype=float),
                      phi=np.asarray(phi_values, dtype=float),
                      mean_n=mean_n, theta_c_mk=theta, theta_c_entropy_mk=theta_s,
                      currents_ghz2=currents, final_rho=final_rho, states=states,
                      diagnostics=diagnostics)


def evolve(rho0, liouv, t_grid, params, rtol=DEFAULT_RTOL, atol=DEFAULT_ATOL,
           store_states=False, max_step=np.inf):
    """Integrate the master equation and record observables on t_grid.

    Returns a Trajectory with dense-output-interpolated observables; set
    store_states to also keep the density matrix at every grid point.
    """
    t_grid = np.asarray(t_grid, dtype=float)
    if t_grid.ndim != 1 or len(t_grid) < 2 or np.any(np.diff(t_grid) <= 0):
        raise ValueError("t_grid must be strictly increasing with >= 2 points")
    ctx = _RunContext(liouv, rho0, params)
    stepper = RK45(ctx.rhs, t_grid[0], ctx.y0, t_bound=t_grid[-1],
                   rtol=rtol, atol=atol, max_step=max_step)
    records = [ctx.observables(ctx.y0)]
    states = [np.asarray(rho0, dtype=complex)] if store_states else None
    next_idx = 1
    max_drift = 0.0
    steps = 0
    while stepper.status == "running":
        msg = stepper.step()
        if stepper.status == "failed":
            raise StiffnessError(
                f"integrator step size underflow at t = {stepper.t:.6g} ns ({msg}); "
                "reduce the kappa*t span or tighten the truncation")
        steps += 1
        # hermitize + renormalize; the generator commutes with both maps
        y = ctx.hermitize(stepper.y)
        tr = ctx.trace(y)
        max_drift = max(max_drift, abs(tr - 1.0))
        stepper.y = y / tr
        if stepper.f is not None:
            stepper.f = ctx.hermitize(stepper.f) / tr
        if next_idx < len(t_grid) and t_grid[next_idx] <= stepper.t:
            dense = stepper.dense_output()
            while next_idx < len(t_grid) and t_grid[next_idx] <= stepper.t:
                yk = dense(t_grid[next_idx])
                records.append(ctx.observables(yk))
                if store_states:
                    rho_k = ctx.to_dense(ctx.hermitize(yk))
                    states.append(rho_k / np.trace(rho_k).real)
                next_idx += 1
    if next_idx < len(t_grid):  # t_bound reached within float fuzz
        records.append(ctx.observables(stepper.y))
        if store_states:
            states.append(ctx.to_dense(stepper.y))
        next_idx += 1
    final_rho = ctx.to_dense(stepper.y)
    diagnostics = {"path": ctx.path, "steps": steps,
                   "max_trace_drift": max_drift, "rtol": rtol, "atol": atol}
    phi_values = np.full(len(t_grid), params.phi)
    return _assemble_trajectory(t_grid, phi_values, records, params, final_rho,
                                states, diagnostics)


# ---------------------------------------------------------------------------
# steady states
# ---------------------------------------------------------------------------

class SteadyStateResult:
    """Fixed point of the master equation plus solver diagnostics."""

    def __init__(self, liouv, params, residual, method, iterations,
                 clipped_weight, smap=None, y=None, rho=None):
        self.liouv = liouv
        self.params = params
        self.space = liouv.space
        self.residual = residual
        self.method = method
        self.iterations = iterations
        self.clipped_weight = clipped_weight
        self._smap = smap
        self._y = y
        self._rho = rho

    @property
    def rho(self):
        if self._rho is None:
            self._rho = self._smap.scatter(self._y)
        return self._rho

    def mean_n(self, label):
        if self._y is not None:
            return self._smap.mean_number(self._y, label)
        diag = np.diag(self.rho).real
        return float(np.dot(diag, self.space.mode_numbers(label)))

    def populations(self, label):
        if self._y is not None:
            return self._smap.reduced_populations(self._y, label)
        return thermo.fock_populations(partial_trace(self.rho, label, self.space))

    def theta_c(self):
        return thermo.temperature_from_energy(self.mean_n("c"),
                                              self.params.omega("c"))

    def min_eigenvalue(self):
        if self._y is not None:
            return self._smap.min_eigenvalue(self._y)
        return float(np.linalg.eigvalsh(self.rho).min())

    def report(self):
        return thermo.thermo_report(self.rho, self.params, liouv=self.liouv,
                                    space=self.space)


def _trace_replace(matrix, trace_cols, size):
    """Replace row 0 with the trace functional; returns (csc matrix, rhs)."""
    coo = matrix.tocoo()
    keep = coo.row != 0
    rows = np.concatenate([coo.row[keep], np.zeros(len(trace_cols), dtype=coo.row.dtype)])
    cols = np.concatenate([coo.col[keep], np.asarray(trace_cols)])
    data = np.concatenate([coo.data[keep], np.ones(len(trace_cols), dtype=complex)])
    mod = sp.coo_matrix((data, (rows, cols)), shape=(size, size)).tocsc()
    rhs = np.zeros(size, dtype=complex)
    rhs[0] = 1.0
    return mod, rhs


def _direct_solve(matrix, trace_cols, size, permc_spec="COLAMD"):
    mod, rhs = _trace_replace(matrix, trace_cols, size)
    try:
        lu = splu(mod, permc_spec=permc_spec)
        x = lu.solve(rhs)
    except RuntimeError as exc:
        raise MultiplicityError(
            f"trace-replaced steady system is singular ({exc}); "
            "the steady space is likely degenerate") from exc
    if not np.all(np.isfinite(x)):
        raise MultiplicityError("steady solve produced non-finite entries; "
                                "the steady space is likely degenerate")
    return x


def _sector_solve(gen, smap, maxiter):
    """ILU-preconditioned LGMRES on the trace-replaced sector system, with a
    direct factorization fallback; returns (x, iterations, method)."""
    mod, rhs = _trace_replace(gen, smap.diag_pairs, smap.size)
    try:
        ilu = spilu(mod, drop_tol=1e-5, fill_factor=12)
        prec = LinearOperator(mod.shape, matvec=ilu.solve)
        count = [0]
        x, info = lgmres(mod, rhs, M=prec, rtol=1e-13, atol=0.0,
                         maxiter=maxiter,
                         callback=lambda _xk: count.__setitem__(0, count[0] + 1))
        if info == 0 and np.all(np.isfinite(x)):
            return x, count[0], "sector-krylov"
    except RuntimeError:
        pass
    x = _direct_solve(gen, smap.diag_pairs, smap.size,
                      permc_spec="MMD_AT_PLUS_A")
    return x, 1, "sector-direct"


def steady_state(liouv, tol=None, method="auto", params=None,
                 clip_floor=CLIP_FLOOR, maxiter=2000):
    """Solve L(rho) = 0 with tr(rho) = 1.

    One row of the sparse system is replaced by the trace functional;
    the solve runs on the charge sector when available, else direct
    sparse factorization below D^2 = 2e5 and ILU-preconditioned LGMRES
    above.  The state is Hermitian-symmetrized, eigenvalues below
    clip_floor are clipped (logged in clipped_weight) and the residual
    ||L(rho)|| is measured with the full generator.
    """
    if not liouv.baths or all(b.kappa == 0 for b in liouv.baths):
        raise ValueError("steady_state needs at least one dissipative bath")
    dim = liouv.dim
    if tol is None:
        tol = 1e-10 * dim
    sector = sector_generator_for(liouv) if method in ("auto", "sector") else None
    if method == "sector" and sector is None:
        raise ValueError("sector method requested but the Hamiltonian does not "
                         "conserve the refrigerator charges")
    iterations = 1
    if sector is not None:
        smap, gen = sector
        x, iterations, method_used = _sector_solve(gen, smap, maxiter)
        y = smap.hermitize(x)
        y, clipped = smap.clip_negative(y, clip_floor)
        y = y / smap.trace(y).real
        residual = float(np.linalg.norm(gen @ y))
        result = SteadyStateResult(liouv, params, residual, method_used,
                                   iterations, clipped, smap=smap, y=y)
    else:
        trace_cols = np.arange(dim) * (dim + 1)
        super_dim = dim * dim
        big = liouv.superoperator
        if super_dim <= DIRECT_SOLVE_MAX_SUPER_DIM:
            x = _direct_solve(big, trace_cols, super_dim)
            method_used = "full-direct"
        else:
            mod, rhs = _trace_replace(big, trace_cols, super_dim)
            x0 = vec(thermal_product_state(params)) if params is not None else None
            try:
                prec = spilu(mod, drop_tol=1e-5, fill_factor=40)
                m_op = LinearOperator((super_dim, super_dim), matvec=prec.solve)
            except RuntimeError as exc:
                raise MultiplicityError(f"ILU factorization failed ({exc})") from exc
            count = [0]

            def _cb(_xk):
                count[0] += 1

            x, info = lgmres(mod, rhs, x0=x0, M=m_op, rtol=1e-12, atol=0.0,
                             maxiter=maxiter, callback=_cb)
            iterations = count[0]
            if info != 0:
                raise ConvergenceError(
                    f"LGMRES did not converge (info={info}) after {iterations} "
                    f"iterations", residual=float(np.linalg.norm(mod @ x - rhs)))
            method_used = "full-iterative"
        rho = unvec(x, dim)
        rho = 0.5 * (rho + rho.conj().T)
        w, v = np.linalg.eigh(rho)
        clipped = float(-w[w < 0].sum()) if (w < clip_floor).any() else 0.0
        if (w < clip_floor).any():
            w = np.clip(w, 0.0, None)
            rho = (v * w) @ v.conj().T
        rho = rho / np.trace(rho).real
        residual = float(np.linalg.norm(liouv.apply(rho)))
        result = SteadyStateResult(liouv, params, residual, method_used,
                                   iterations, clipped, rho=rho)
    if result.residual > tol:
        raise ConvergenceError(
            f"steady-state residual {result.residual:.3e} exceeds tol {tol:.3e}",
            residual=result.residual)
    return result


# ---------------------------------------------------------------------------
# truncation certification
# ---------------------------------------------------------------------------

@dataclass
class CertifiedDims:
    dims: tuple
    refined_dims: tuple
    history: list
    tol: float


def _default_observables(params, dims):
    from .model import build_h_rwa
    from .lindblad import build_liouvillian
    p = params.with_changes(dims=dims)
    liouv = build_liouvillian(build_h_rwa(p), p)
    res = steady_state(liouv, params=p)
    return {"n_c": res.mean_n("c"), "n_h": res.mean_n("h"),
            "n_r": res.mean_n("r"), "theta_c": res.theta_c()}


def certify_truncation(params, observable=None, step=2, tol=1e-3,
                       max_product=400_000):
    """Grow every mode dimension by `step` until the observables move by
    less than `tol` relative between consecutive refinements; returns the
    smaller certified dims."""
    if step < 1:
        raise ValueError(f"need step >= 1, got {step}")
    observable = observable or _default_observables
    dims = tuple(params.dims)
    if math.isinf(tol):
        return CertifiedDims(dims=dims, refined_dims=dims, history=[], tol=tol)
    history = []
    obs = observable(params, dims)
    history.append((dims, obs))
    while True:
        bigger = tuple(d + step for d in dims)
        if math.prod(bigger) > max_product:
            raise CertificationError(
                f"certification exceeded the memory budget: next dims {bigger} "
                f"have product {math.prod(bigger)} > {max_product}",
                history=history)
        obs_big = observable(params, bigger)
        history.append((bigger, obs_big))
        rel = {k: abs(obs_big[k] - obs[k]) / max(abs(obs_big[k]), 1e-300)
               for k in obs}
        if all(r < tol for r in rel.values()):
            return CertifiedDims(dims=dims, refined_dims=bigger,
                                 history=history, tol=tol)
        dims, obs = bigger, obs_big
