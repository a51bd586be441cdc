"""Weak-symmetry reduction of the refrigerator master equation (internal).

The resonant interaction conserves n_c - n_h and n_c + n_r, and thermal
dissipators shift the row and column charges of a density matrix
together.  Density-matrix elements rho[i, j] whose basis states carry
equal charge pairs therefore close under the dynamics; states that
start in that "pair sector" (any Fock-diagonal state does) stay in it.
This module builds the index maps and the sector-restricted sparse
generator so dynamics and steady-state solves run on the sector instead
of the full D^2 space.  Callers always verify results against the full
generator, so a wrong sector assumption can only fail loudly.
"""

import numpy as np
import scipy.sparse as sp

REFRIGERATOR_LABELS = ("c", "h", "r")


def charge_vectors(space):
    """The two conserved charges per basis state, or None for other spaces."""
    if space.labels != REFRIGERATOR_LABELS:
        return None
    nc = space.mode_numbers("c")
    nh = space.mode_numbers("h")
    nr = space.mode_numbers("r")
    return nc - nh, nc + nr


def operator_conserves_charges(matrix, space, rtol=1e-13):
    """True when every matrix element connects equal-charge basis states."""
    charges = charge_vectors(space)
    if charges is None or not sp.issparse(matrix):
        return False
    g1, g2 = charges
    coo = matrix.tocoo()
    if coo.nnz == 0:
        return True
    scale = np.abs(coo.data).max()
    moved = (g1[coo.row] != g1[coo.col]) | (g2[coo.row] != g2[coo.col])
    if not moved.any():
        return True
    return np.abs(coo.data[moved]).max() <= rtol * scale


class ChargeSectorMap:
    """Index bookkeeping for the equal-charge pair sector of a space."""

    def __init__(self, space):
        charges = charge_vectors(space)
        if charges is None:
            raise ValueError(f"space {space} has no refrigerator charge structure")
        self.space = space
        dim = space.dim
        g1, g2 = charges
        key = g1.astype(np.int64) * (2 * max(space.dims) + 1) + g2
        order = np.argsort(key, kind="stable")
        sorted_key = key[order]
        # groups of basis states sharing both charges
        starts = np.flatnonzero(np.r_[True, sorted_key[1:] != sorted_key[:-1]])
        bounds = np.r_[starts, len(order)]
        self.groups = [order[bounds[k]:bounds[k + 1]] for k in range(len(starts))]
        rows, cols = [], []
        for g in self.groups:
            i, j = np.meshgrid(g, g, indexing="ij")
            rows.append(i.ravel())
            cols.append(j.ravel())
        self.pair_row = np.concatenate(rows)
        self.pair_col = np.concatenate(cols)
        self.size = len(self.pair_row)
        # vec position of each pair under column stacking
        self.vec_index = self.pair_row + self.pair_col * dim
        lookup = np.full(dim * dim, -1, dtype=np.int64)
        lookup[self.pair_row * dim + self.pair_col] = np.arange(self.size)
        self._lookup = lookup
        self.diag_pairs = np.flatnonzero(self.pair_row == self.pair_col)
        self.diag_states = self.pair_row[self.diag_pairs]
        self.transpose_perm = lookup[self.pair_col * dim + self.pair_row]
        # per-group flat pair indices, for block eigendecompositions
        self.group_pair_index = []
        for g in self.groups:
            i, j = np.meshgrid(g, g, indexing="ij")
            self.group_pair_index.append(lookup[i.ravel() * dim + j.ravel()].reshape(len(g), len(g)))

    # -- state transport ----------------------------------------------------
    def gather(self, rho):
        return np.ascontiguousarray(np.asarray(rho)[self.pair_row, self.pair_col])

    def scatter(self, y):
        dim = self.space.dim
        rho = np.zeros((dim, dim), dtype=complex)
        rho[self.pair_row, self.pair_col] = y
        return rho

    def off_sector_mass(self, rho):
        rem = np.array(rho, dtype=complex, copy=True)
        rem[self.pair_row, self.pair_col] = 0.0
        return float(np.linalg.norm(rem))

    # -- observables on sector vectors --------------------------------------
    def populations(self, y):
        return y[self.diag_pairs].real

    def trace(self, y):
        return complex(y[self.diag_pairs].sum())

    def mean_number(self, y, label):
        occ = self.space.mode_numbers(label)[self.diag_states]
        return float(np.dot(self.populations(y), occ))

    def reduced_populations(self, y, label):
        occ = self.space.mode_numbers(label)[self.diag_states]
        return np.bincount(occ, weights=self.populations(y),
                           minlength=self.space.dim_of(label))

    def hermitize(self, y):
        return 0.5 * (y + np.conj(y[self.transpose_perm]))

    def block_eigh(self, y):
        """Eigenvalues/vectors of the block-diagonal state; list per group."""
        out = []
        for idx in self.group_pair_index:
            block = y[idx]
            block = 0.5 * (block + block.conj().T)
            out.append(np.linalg.eigh(block))
        return out

    def clip_negative(self, y, floor):
        """Zero eigenvalues below floor block-by-block; returns (y, clipped_mass)."""
        clipped = 0.0
        parts = np.array(y, copy=True)
        for idx, (w, v) in zip(self.group_pair_index, self.block_eigh(y)):
            if w.min() >= floor:
                continue
            clipped += float(-w[w < 0].sum())
            w = np.clip(w, 0.0, None)
            parts[idx] = (v * w) @ v.conj().T
        return parts, clipped

    def min_eigenvalue(self, y):
        return min(float(w.min()) for w, _ in self.block_eigh(y))


def build_sector_generator(liouv, smap):
    """Sector-restricted sparse matrix of a charge-conserving Liouvillian."""
    space = liouv.space
    dim = space.dim
    h = liouv.hamiltonian.matrix if liouv.hamiltonian is not None else None
    if h is not None and not sp.issparse(h):
        raise ValueError("sector generator needs a sparse Hamiltonian")
    # off-diagonal kron terms:  L = sum c * kron(A, B)  acting as A-col x B-col
    terms = []
    if h is not None:
        hc = h.tocsc()
        terms.append((None, hc, -1j))        # kron(I, H)
        terms.append((hc.T.tocsc(), None, 1j))  # kron(H^T, I)
    diag_weight = np.zeros(dim)
    for b in liouv.baths:
        a = b.a.tocsc()
        terms.append((a.conj().tocsc(), a, b.rate_down))
        if b.rate_up:
            terms.append((a.T.tocsc(), b.adag.tocsc(), b.rate_up))
        diag_weight -= 0.5 * b.rate_down * b.diag_down
        if b.rate_up:
            diag_weight -= 0.5 * b.rate_up * b.diag_up
    rows, cols, vals = [], [], []
    lookup = smap._lookup
    pr, pc = smap.pair_row, smap.pair_col
    for a_mat, b_mat, coeff in terms:
        for q in range(smap.size):
            i_, j_ = pr[q], pc[q]
            if a_mat is None:
                a_idx, a_val = (j_,), (1.0,)
            else:
                s, e = a_mat.indptr[j_], a_mat.indptr[j_ + 1]
                a_idx, a_val = a_mat.indices[s:e], a_mat.data[s:e]
            if b_mat is None:
                b_idx, b_val = (i_,), (1.0,)
            else:
                s, e = b_mat.indptr[i_], b_mat.indptr[i_ + 1]
                b_idx, b_val = b_mat.indices[s:e], b_mat.data[s:e]
            for j, va in zip(a_idx, a_val):
                for i, vb in zip(b_idx, b_val):
                    p = lookup[i * dim + j]
                    if p >= 0:
                        rows.append(p)
                        cols.append(q)
                        vals.append(coeff * va * vb)
    # dissipator anticommutator halves are diagonal in the pair index
    p_all = np.arange(smap.size)
    rows.extend(p_all.tolist())
    cols.extend(p_all.tolist())
    vals.extend((diag_weight[pr] + diag_weight[pc]).astype(complex).tolist())
    gen = sp.coo_matrix((vals, (rows, cols)), shape=(smap.size, smap.size))
    return gen.tocsr()


_SECTOR_CACHE_ATTR = "_sector_cache"


def sector_map_for(space):
    if space.labels != REFRIGERATOR_LABELS:
        return None
    return ChargeSectorMap(space)


def sector_generator_for(liouv):
    """Cached (map, generator) for a Liouvillian, or None if not applicable."""
    cached = getattr(liouv, _SECTOR_CACHE_ATTR, False)
    if cached is not False:
        return cached
    result = None
    if liouv.space.labels == REFRIGERATOR_LABELS:
        h = liouv.hamiltonian
        if h is None or operator_conserves_charges(h.matrix, liouv.space):
            smap = ChargeSectorMap(liouv.space)
            result = (smap, build_sector_generator(liouv, smap))
    setattr(liouv, _SECTOR_CACHE_ATTR, result)
    return result
