"""Energy-ordered free product basis for system + bath Hamiltonians.

The free Hamiltonian of every model splits as H0 = H_S x 1 + 1 x H_B,
with the "system" the single measured site and the "bath" everything
else.  Free eigenstates are products |s> x |beta> with energies
E = eps_s + E_beta.  Two labelings are kept: the lexicographic product
order (system index slowest) and a stable energy-ascending order with
ties broken by product index.  All dense matrices downstream are stored
in the energy-ordered basis.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

#: off-diagonal magnitude below which a block is treated as already diagonal
_DIAG_TOL = 1e-12


def fix_eigenvector_signs(vectors: np.ndarray) -> np.ndarray:
    """Flip each column so its largest-magnitude component is positive."""
    lead = np.argmax(np.abs(vectors), axis=0)
    signs = np.sign(vectors[lead, np.arange(vectors.shape[1])])
    signs[signs == 0] = 1.0
    return vectors * signs


def _block_eigensystem(h: np.ndarray) -> tuple[np.ndarray, np.ndarray, bool]:
    """Eigenvalues/vectors of a real-symmetric block.

    A numerically diagonal block keeps its natural ordering and the
    identity as eigenvector matrix, so physical level labels (e.g. the
    position quantum number) survive degeneracies.
    """
    off = h - np.diag(np.diag(h))
    if np.max(np.abs(off)) <= _DIAG_TOL:
        return np.diag(h).copy(), np.eye(h.shape[0]), True
    if np.max(np.abs(h - h.T)) > 1e-10:
        raise ValueError("Hamiltonian block is not symmetric")
    vals, vecs = np.linalg.eigh(h)
    return vals, fix_eigenvector_signs(vecs), False


@dataclass
class FreeBasis:
    """Bookkeeping between product labels (s, beta) and energy order alpha."""

    sys_energies: np.ndarray      # eps_s, len d_sys, in system-label order
    bath_energies: np.ndarray     # E_beta, len d_bath, in bath-label order
    sys_vectors: np.ndarray       # natural -> system eigenbasis (columns)
    bath_vectors: np.ndarray      # natural -> bath eigenbasis (columns)
    energies: np.ndarray          # E_alpha ascending, len d
    perm: np.ndarray              # alpha -> product index p = s * d_bath + beta
    sys_diagonal: bool = True     # H_S was diagonal in the natural basis
    bath_diagonal: bool = True
    _vectors_cache: np.ndarray | None = field(default=None, repr=False)

    @property
    def d_sys(self) -> int:
        return len(self.sys_energies)

    @property
    def d_bath(self) -> int:
        return len(self.bath_energies)

    @property
    def dim(self) -> int:
        return len(self.energies)

    @property
    def s_of_alpha(self) -> np.ndarray:
        return self.perm // self.d_bath

    @property
    def beta_of_alpha(self) -> np.ndarray:
        return self.perm % self.d_bath

    def alpha_of(self, s: int, beta: int) -> int:
        """Energy-order index of the product state (s, beta)."""
        p = s * self.d_bath + beta
        return int(self._inverse_perm()[p])

    def _inverse_perm(self) -> np.ndarray:
        inv = np.empty_like(self.perm)
        inv[self.perm] = np.arange(self.dim)
        return inv

    def vectors(self) -> np.ndarray:
        """Columns = free eigenstates in the natural product basis."""
        if self._vectors_cache is None:
            b = np.kron(self.sys_vectors, self.bath_vectors)
            self._vectors_cache = np.ascontiguousarray(b[:, self.perm])
        return self._vectors_cache

    def to_free(self, op_natural: np.ndarray) -> np.ndarray:
        """Transform an operator from the natural product basis to this basis."""
        b = self.vectors()
        return b.T @ op_natural @ b

    def diagonal_to_free(self, values_natural: np.ndarray) -> np.ndarray:
        """Free-basis matrix of an operator diagonal in the natural basis."""
        b = self.vectors()
        return (b.T * values_natural[None, :]) @ b


def build_free_basis(h_sys: np.ndarray, h_bath: np.ndarray) -> FreeBasis:
    """Construct the energy-ordered free basis from symmetric H_S, H_B blocks."""
    eps, u_sys, sys_diag = _block_eigensystem(np.asarray(h_sys, dtype=float))
    eb, u_bath, bath_diag = _block_eigensystem(np.asarray(h_bath, dtype=float))
    grid = eps[:, None] + eb[None, :]          # system index slowest
    flat = grid.ravel()
    perm = np.argsort(flat, kind="stable")     # ties keep product order
    return FreeBasis(
        sys_energies=eps,
        bath_energies=eb,
        sys_vectors=u_sys,
        bath_vectors=u_bath,
        energies=flat[perm],
        perm=perm,
        sys_diagonal=sys_diag,
        bath_diagonal=bath_diag,
    )
