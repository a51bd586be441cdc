"""Local Lindblad master equation as a superoperator on vectorized states.

Vectorization is column-stacking: vec(rho)[i + j*D] = rho[i, j], so
vec(A rho B) = kron(B.T, A) vec(rho).  A golden test pins the resulting
two-level dissipator entries so the convention cannot drift.
"""

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from . import fock
from .errors import DimensionError
from .fock import FockSpace, Operator

SUPEROP_NNZ_BUDGET = 6e7


def vec(rho):
    """Column-stack a D x D matrix into a D^2 vector."""
    return np.asarray(rho).reshape(-1, order="F")


def unvec(v, dim):
    return np.asarray(v).reshape((dim, dim), order="F")


def _rmul(rho, m):
    """rho @ m with m possibly sparse (dense @ sparse without densifying m)."""
    if sp.issparse(m):
        return (m.T @ rho.T).T
    return rho @ m


def dissipator(jump):
    """Vectorized D[A] rho = A rho A† - {A†A, rho}/2 (sparse superoperator)."""
    a = jump.matrix if isinstance(jump, Operator) else jump
    a = sp.csr_matrix(a)
    d = a.shape[0]
    if a.shape != (d, d):
        raise DimensionError(f"jump operator must be square, got {a.shape}")
    ada = (a.conj().T @ a).tocsr()
    eye = sp.identity(d, dtype=complex, format="csr")
    s = sp.kron(a.conj(), a, format="csr")
    s = s - 0.5 * sp.kron(eye, ada, format="csr")
    s = s - 0.5 * sp.kron(ada.T, eye, format="csr")
    return s.tocsr()


@dataclass
class BathChannel:
    """Thermal damping of one mode: kappa (rad/ns) at occupation nbar.

    mode_shape = (left, d, right) marks the jump as an embedded ladder
    operator, which enables an axis-slicing fast path for the sandwich
    terms (no sparse right-multiplications in the integrator hot loop).
    """

    label: str
    kappa: float
    nbar: float
    a: sp.csr_matrix
    mode_shape: tuple = None
    adag: sp.csr_matrix = field(init=False)
    diag_down: np.ndarray = field(init=False)  # diag(a† a)
    diag_up: np.ndarray = field(init=False)    # diag(a a†)

    def __post_init__(self):
        self.adag = self.a.conj().T.tocsr()
        self.diag_down = (self.adag @ self.a).diagonal().real
        self.diag_up = (self.a @ self.adag).diagonal().real
        if self.mode_shape is not None:
            d = self.mode_shape[1]
            s = np.sqrt(np.arange(1, d))
            self._w2 = np.outer(s, s)[None, :, None, None, :, None]

    @property
    def rate_down(self):
        return self.kappa * (self.nbar + 1.0)

    @property
    def rate_up(self):
        return self.kappa * self.nbar

    def decay_vector(self):
        """w such that the anticommutator halves are -(w_j + w_k)/2 * rho_jk."""
        return self.rate_down * self.diag_down + self.rate_up * self.diag_up

    def apply_jumps(self, rho):
        """Sandwich terms r1 a rho a† + r2 a† rho a."""
        if self.mode_shape is None:
            out = self.rate_down * _rmul(self.a @ rho, self.adag)
            if self.rate_up:
                out += self.rate_up * _rmul(self.adag @ rho, self.a)
            return out
        left, d, right = self.mode_shape
        dim = rho.shape[0]
        r6 = rho.reshape(left, d, right, left, d, right)
        out = np.zeros_like(r6)
        out[:, :-1, :, :, :-1, :] = self.rate_down * (r6[:, 1:, :, :, 1:, :] * self._w2)
        if self.rate_up:
            out[:, 1:, :, :, 1:, :] += self.rate_up * (r6[:, :-1, :, :, :-1, :] * self._w2)
        return out.reshape(dim, dim)

    def apply(self, rho):
        """Full dissipative action of this bath on a density matrix."""
        out = self.apply_jumps(rho)
        w = self.decay_vector()
        out -= 0.5 * (w[:, None] * rho + rho * w[None, :])
        return out

    def superoperator(self):
        s = self.rate_down * dissipator(self.a)
        if self.rate_up:
            s = s + self.rate_up * dissipator(self.adag)
        return s.tocsr()


class Liouvillian:
    """Generator of the local master equation on a composite space.

    Applies in matrix form for O(D^2) cost per call; the assembled
    D^2 x D^2 sparse superoperator and per-bath pieces are built on
    demand (with a memory guard for dense Hamiltonians).
    """

    def __init__(self, hamiltonian, baths, space):
        if hamiltonian is not None and hamiltonian.space != space:
            raise DimensionError("Hamiltonian lives on a different space")
        for b in baths:
            if b.a.shape != (space.dim, space.dim):
                raise DimensionError(f"bath {b.label} jump operator has wrong shape")
        self.hamiltonian = hamiltonian
        self.baths = list(baths)
        self.space = space
        self.dim = space.dim
        self._super = None
        self._decay = None

    def _decay_weights(self):
        if self._decay is None:
            w = np.zeros(self.dim)
            for b in self.baths:
                w += b.decay_vector()
            self._decay = 0.5 * np.add.outer(w, w)
        return self._decay

    def bath(self, label):
        for b in self.baths:
            if b.label == label:
                return b
        raise KeyError(f"no bath tagged {label!r}")

    def apply(self, rho):
        """d(rho)/dt for a dense density matrix."""
        rho = np.asarray(rho)
        if rho.shape != (self.dim, self.dim):
            raise DimensionError(f"state shape {rho.shape} != ({self.dim}, {self.dim})")
        if self.hamiltonian is not None:
            hm = self.hamiltonian.matrix
            out = -1j * (hm @ rho - _rmul(rho, hm))
        else:
            out = np.zeros_like(rho, dtype=complex)
        out -= self._decay_weights() * rho
        for b in self.baths:
            out += b.apply_jumps(rho)
        return out

    def matvec(self, v):
        return vec(self.apply(unvec(v, self.dim)))

    def unitary_superoperator(self):
        if self.hamiltonian is None:
            n2 = self.dim ** 2
            return sp.csr_matrix((n2, n2), dtype=complex)
        hm = self.hamiltonian.matrix
        if not sp.issparse(hm):
            nnz_est = 2 * self.dim * np.count_nonzero(np.abs(hm) > 0)
            if nnz_est > SUPEROP_NNZ_BUDGET:
                raise MemoryError(
                    f"assembling the superoperator of a dense Hamiltonian would need "
                    f"~{nnz_est:.1e} nonzeros; reduce the truncation")
            hm = sp.csr_matrix(hm)
        eye = sp.identity(self.dim, dtype=complex, format="csr")
        return (-1j * (sp.kron(eye, hm, format="csr")
                       - sp.kron(hm.T, eye, format="csr"))).tocsr()

    def bath_superoperator(self, label):
        return self.bath(label).superoperator()

    @property
    def superoperator(self):
        if self._super is None:
            s = self.unitary_superoperator()
            for b in self.baths:
                s = s + b.superoperator()
            self._super = s.tocsr()
        return self._super


def build_liouvillian(hamiltonian, params, space=None):
    """Master-equation generator for a Hamiltonian and bath parameters.

    Rates are kappa_a (n_B^a + 1) downward and kappa_a n_B^a upward for
    each mode, with kappa converted to angular units to match the
    Hamiltonian builders.
    """
    if space is None:
        space = hamiltonian.space if hamiltonian is not None else params.space()
    if tuple(space.dims) != tuple(params.dims):
        raise DimensionError(f"space dims {space.dims} != params dims {params.dims}")
    baths = []
    for lab in space.labels:
        osc = params.osc(lab)
        axis = space.axis(lab)
        left = math.prod(space.dims[:axis]) if axis else 1
        right = math.prod(space.dims[axis + 1:]) if axis + 1 < len(space.dims) else 1
        a_emb = fock.embed(fock.annihilation(space.dim_of(lab)), lab, space)
        baths.append(BathChannel(label=lab, kappa=2.0 * math.pi * osc.kappa,
                                 nbar=osc.nbar, a=a_emb.matrix.tocsr(),
                                 mode_shape=(left, space.dim_of(lab), right)))
    return Liouvillian(hamiltonian, baths, space)


# ---------------------------------------------------------------------------
# density-matrix sanity checks (on demand, not per integrator step)
# ---------------------------------------------------------------------------

def density_matrix_defects(rho, eigenvalues=None):
    """(hermiticity defect, trace deviation, minimum eigenvalue) of a state."""
    rho = np.asarray(rho)
    herm = float(np.abs(rho - rho.conj().T).max())
    tr_dev = abs(np.trace(rho) - 1.0)
    if eigenvalues is None:
        eigenvalues = np.linalg.eigvalsh(0.5 * (rho + rho.conj().T))
    return herm, float(tr_dev), float(np.min(eigenvalues))


def assert_density_matrix(rho, herm_tol=1e-10, trace_tol=1e-9, eig_floor=-1e-8):
    herm, tr_dev, min_eig = density_matrix_defects(rho)
    if herm > herm_tol:
        raise ValueError(f"hermiticity defect {herm:.2e} > {herm_tol}")
    if tr_dev > trace_tol:
        raise ValueError(f"trace deviation {tr_dev:.2e} > {trace_tol}")
    if min_eig < eig_floor:
        raise ValueError(f"min eigenvalue {min_eig:.2e} < {eig_floor}")
