"""Truncated bosonic Fock spaces and the operators living on them.

Single-mode ladder operators, the diagonal Laguerre-dressed ladder
coefficients entering the junction Hamiltonians, the displacement-phase
exponential exp(i 2 lam (a + a†)) with both a closed-form and a
matrix-exponential route, and tensor-product embedding / partial trace
on composite spaces.
"""

import math

import numpy as np
import scipy.sparse as sp
from scipy.linalg import expm

from .errors import DimensionError, ModeLabelError

REFRIGERATOR_MODES = ("c", "h", "r")

HERMITICITY_TOL = 1e-12


class FockSpace:
    """Composite truncated bosonic space with a fixed mode ordering.

    Basis index of occupations (n_0, ..., n_{M-1}) is row-major:
    ((n_0 * d_1 + n_1) * d_2 + n_2) ...  Three-mode refrigerator spaces
    use the labels ('c', 'h', 'r') in that order.
    """

    def __init__(self, dims, labels=None):
        dims = tuple(int(d) for d in dims)
        if not dims or any(d < 2 for d in dims):
            raise DimensionError(f"all mode dimensions must be >= 2, got {dims}")
        if labels is None:
            labels = REFRIGERATOR_MODES if len(dims) == 3 else tuple(
                f"m{i}" for i in range(len(dims)))
        labels = tuple(labels)
        if len(labels) != len(dims) or len(set(labels)) != len(labels):
            raise ModeLabelError(f"labels {labels} must be unique, one per mode")
        self.dims = dims
        self.labels = labels
        self.dim = math.prod(dims)
        self._axis = {lab: i for i, lab in enumerate(labels)}
        self._occ = None

    def axis(self, label):
        try:
            return self._axis[label]
        except KeyError:
            raise ModeLabelError(f"unknown mode {label!r}; have {self.labels}") from None

    def dim_of(self, label):
        return self.dims[self.axis(label)]

    def occupations(self):
        """(dim, n_modes) array: occupation numbers of every basis state."""
        if self._occ is None:
            grids = np.indices(self.dims).reshape(len(self.dims), -1)
            self._occ = grids.T.copy()
            self._occ.setflags(write=False)
        return self._occ

    def mode_numbers(self, label):
        """Occupation of one mode for every basis state (length dim)."""
        return self.occupations()[:, self.axis(label)]

    def basis_index(self, occ):
        idx = 0
        for n, d in zip(occ, self.dims):
            if not 0 <= n < d:
                raise DimensionError(f"occupation {occ} outside dims {self.dims}")
            idx = idx * d + n
        return idx

    def __eq__(self, other):
        return (isinstance(other, FockSpace)
                and self.dims == other.dims and self.labels == other.labels)

    def __hash__(self):
        return hash((self.dims, self.labels))

    def __repr__(self):
        return f"FockSpace(dims={self.dims}, labels={self.labels})"


def _as_matrix(m):
    return m.toarray() if sp.issparse(m) else np.asarray(m)


class Operator:
    """Complex square matrix tagged with its Fock space.

    Stores either a scipy sparse matrix or a dense ndarray; binary
    operations check that both operands live on the same space.
    """

    def __init__(self, matrix, space, herm=None):
        if sp.issparse(matrix):
            matrix = matrix.tocsr()
        else:
            matrix = np.asarray(matrix, dtype=complex)
        if matrix.shape != (space.dim, space.dim):
            raise DimensionError(
                f"matrix shape {matrix.shape} != space dimension {space.dim}")
        self.matrix = matrix
        self.space = space
        if herm:
            defect = self.hermiticity_defect()
            if defect > HERMITICITY_TOL:
                raise ValueError(f"operator marked Hermitian but |M - M†| = {defect:.2e}")
        self.herm = bool(herm)

    @property
    def is_sparse(self):
        return sp.issparse(self.matrix)

    def dense(self):
        return _as_matrix(self.matrix)

    def hermiticity_defect(self):
        d = self.matrix - self.matrix.conj().T
        if sp.issparse(d):
            return float(abs(d).max()) if d.nnz else 0.0
        return float(np.abs(d).max())

    def dag(self):
        return Operator(self.matrix.conj().T, self.space, herm=self.herm)

    def _check(self, other):
        if self.space != other.space:
            raise DimensionError(
                f"operators on different spaces: {self.space} vs {other.space}")

    def __add__(self, other):
        self._check(other)
        return Operator(self.matrix + other.matrix, self.space)

    def __sub__(self, other):
        self._check(other)
        return Operator(self.matrix - other.matrix, self.space)

    def __neg__(self):
        return Operator(-self.matrix, self.space, herm=self.herm)

    def __mul__(self, scalar):
        return Operator(self.matrix * scalar, self.space)

    __rmul__ = __mul__

    def __matmul__(self, other):
        self._check(other)
        return Operator(self.matrix @ other.matrix, self.space)

    def trace(self):
        m = self.matrix
        return complex(m.trace()) if sp.issparse(m) else complex(np.trace(m))

    def expect(self, rho):
        """tr(op @ rho) for a dense density matrix."""
        m = self.matrix
        if sp.issparse(m):
            return complex((m @ rho).trace())
        return complex(np.trace(m @ rho))

    def __repr__(self):
        kind = "sparse" if self.is_sparse else "dense"
        return f"Operator({kind}, dim={self.space.dim})"


# ---------------------------------------------------------------------------
# single-mode constructors
# ---------------------------------------------------------------------------

def _single_mode_space(dim):
    return FockSpace((dim,), labels=("m0",))


def annihilation(dim):
    """Ladder operator with <n-1|a|n> = sqrt(n)."""
    if dim < 2:
        raise DimensionError(f"need dim >= 2, got {dim}")
    m = sp.diags(np.sqrt(np.arange(1, dim)), 1, format="csr", dtype=complex)
    return Operator(m, _single_mode_space(dim))


def creation(dim):
    return annihilation(dim).dag()


def number(dim):
    if dim < 2:
        raise DimensionError(f"need dim >= 2, got {dim}")
    m = sp.diags(np.arange(dim, dtype=float), 0, format="csr", dtype=complex)
    return Operator(m, _single_mode_space(dim), herm=True)


def identity(space):
    return Operator(sp.identity(space.dim, dtype=complex, format="csr"), space, herm=True)


# ---------------------------------------------------------------------------
# generalized Laguerre polynomials and the dressed ladder coefficients
# ---------------------------------------------------------------------------

def _laguerre_sequence(n_max, k, x):
    """L_0^{(k)}(x) .. L_{n_max}^{(k)}(x) by the three-term recurrence in n."""
    if n_max < 0 or k < 0:
        raise ValueError(f"need n >= 0 and k >= 0, got n={n_max}, k={k}")
    out = np.empty(n_max + 1)
    out[0] = 1.0
    if n_max == 0:
        return out
    out[1] = 1.0 + k - x
    for m in range(1, n_max):
        out[m + 1] = ((2 * m + k + 1 - x) * out[m] - (m + k) * out[m - 1]) / (m + 1)
    return out


def laguerre(n, k, x):
    """Generalized Laguerre polynomial L_n^{(k)}(x)."""
    if n < 0 or k < 0:
        raise ValueError(f"need n >= 0 and k >= 0, got n={n}, k={k}")
    return float(_laguerre_sequence(n, k, x)[n])


def nonlinear_coefficients(k, lam, dim):
    """Diagonal of the k-photon dressed ladder operator, levels 0..dim-1.

    Entry n is (2 lam)^k e^{-2 lam^2} * n!/(n+k)! * L_n^{(k)}(4 lam^2);
    the factorial ratio is accumulated as a running product so large n
    never overflows.
    """
    if k < 0:
        raise ValueError(f"need k >= 0, got k={k}")
    if lam <= 0:
        raise ValueError(f"need lambda > 0, got {lam}")
    if dim < 2:
        raise DimensionError(f"need dim >= 2, got {dim}")
    lag = _laguerre_sequence(dim - 1, k, 4.0 * lam * lam)
    pref = (2.0 * lam) ** k * math.exp(-2.0 * lam * lam)
    out = np.empty(dim)
    for n in range(dim):
        ratio = 1.0
        for j in range(1, k + 1):  # n!/(n+k)!
            ratio /= n + j
        out[n] = pref * ratio * lag[n]
    return out


def a_nonlinear(k, lam, dim):
    """Diagonal operator dressing k-photon junction processes (single mode)."""
    vals = nonlinear_coefficients(k, lam, dim)
    m = sp.diags(vals.astype(complex), 0, format="csr")
    return Operator(m, _single_mode_space(dim), herm=True)


def _sqrt_factorial_ratio(n, k):
    """sqrt(n!/(n+k)!) as a running product."""
    r = 1.0
    for j in range(1, k + 1):
        r /= math.sqrt(n + j)
    return r


def displacement_phase(lam, dim, method="laguerre"):
    """exp(i 2 lam (a + a†)) on a dim-level mode.

    method='laguerre' fills the closed-form ladder elements
    i^k (2 lam)^k e^{-2 lam^2} sqrt(n!/(n+k)!) L_n^{(k)}(4 lam^2) at
    offsets k = |row - col| (O(dim^2)); method='expm' numerically
    exponentiates the truncated Hermitian generator and is kept as the
    brute-force oracle route (O(dim^3)).
    """
    if lam <= 0:
        raise ValueError(f"need lambda > 0, got {lam}")
    if dim < 2:
        raise DimensionError(f"need dim >= 2, got {dim}")
    space = _single_mode_space(dim)
    if method == "expm":
        a = annihilation(dim).dense()
        gen = 2.0 * lam * (a + a.conj().T)
        return Operator(expm(1j * gen), space)
    if method != "laguerre":
        raise ValueError(f"unknown method {method!r}")
    x = 4.0 * lam * lam
    u = np.zeros((dim, dim), dtype=complex)
    for k in range(dim):
        lag = _laguerre_sequence(dim - 1 - k, k, x)
        pref = (1j ** k) * (2.0 * lam) ** k * math.exp(-2.0 * lam * lam)
        for n in range(dim - k):
            val = pref * _sqrt_factorial_ratio(n, k) * lag[n]
            u[n + k, n] = val
            u[n, n + k] = val
    return Operator(u, space)


# ---------------------------------------------------------------------------
# composite-space plumbing
# ---------------------------------------------------------------------------

def embed(op, mode, space):
    """identity ⊗ ... ⊗ op ⊗ ... ⊗ identity at the mode's position."""
    axis = space.axis(mode)
    d = space.dims[axis]
    if op.space.dims != (d,):
        raise DimensionError(
            f"operator dim {op.space.dims} != mode {mode!r} dim {d}")
    left = math.prod(space.dims[:axis]) if axis else 1
    right = math.prod(space.dims[axis + 1:]) if axis + 1 < len(space.dims) else 1
    if op.is_sparse:
        m = sp.kron(sp.identity(left, dtype=complex, format="csr"), op.matrix, format="csr")
        m = sp.kron(m, sp.identity(right, dtype=complex, format="csr"), format="csr")
    else:
        m = np.kron(np.kron(np.eye(left), op.dense()), np.eye(right))
    return Operator(m, space, herm=op.herm)


def partial_trace(rho, keep, space):
    """Reduced density matrix over one kept mode."""
    rho = np.asarray(rho)
    if rho.shape != (space.dim, space.dim):
        raise DimensionError(f"state shape {rho.shape} != space dim {space.dim}")
    tr = np.trace(rho)
    if abs(tr - 1.0) > 1e-9:
        raise ValueError(f"input trace {tr} deviates from 1 beyond 1e-9")
    axis = space.axis(keep)
    nm = len(space.dims)
    t = rho.reshape(space.dims + space.dims)
    # trace out every other mode, pairing axis m with axis m + (remaining modes)
    for m in sorted((i for i in range(nm) if i != axis), reverse=True):
        t = np.trace(t, axis1=m, axis2=m + t.ndim // 2)
    return t
