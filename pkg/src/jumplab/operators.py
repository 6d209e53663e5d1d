"""Single-site operators and tensor-product embedding helpers.

Spin matrices follow the ladder-element convention
``<m+1|S+|m> = sqrt(S(S+1) - m(m+1))`` with the basis ordered by
descending magnetic number, so ``sz = diag(S, S-1, ..., -S)``.
S_y is purely imaginary; where a real Hamiltonian needs S_y x S_y we
use ``sy = i * sy_imag`` with ``sy_imag`` real antisymmetric, so that
``S_y x S_y = -(sy_imag x sy_imag)`` stays real.
"""

from __future__ import annotations

import numpy as np


def spin_matrices(spin: float) -> dict[str, np.ndarray]:
    """Return {'z','x','y_imag','plus','minus'} matrices for a spin-S site.

    'y_imag' is the real matrix Y with S_y = i*Y.
    """
    twos = round(2 * spin)
    if twos < 1 or abs(2 * spin - twos) > 1e-12:
        raise ValueError(f"spin must be a positive half-integer, got {spin}")
    dim = twos + 1
    m = spin - np.arange(dim)  # descending: S, S-1, ..., -S
    sz = np.diag(m)
    # <m+1|S+|m>: raising connects column (index of m) to row (index of m+1)
    amp = np.sqrt(spin * (spin + 1) - m[1:] * (m[1:] + 1))
    sp = np.zeros((dim, dim))
    sp[np.arange(dim - 1), np.arange(1, dim)] = amp
    sm = sp.T.copy()
    sx = 0.5 * (sp + sm)
    y = 0.5 * (sm - sp)  # S_y = i * y
    return {"z": sz, "x": sx, "y_imag": y, "plus": sp, "minus": sm}


def pauli_matrices() -> dict[str, np.ndarray]:
    """Pauli sigma matrices (eigenvalues +-1), basis (up, down)."""
    s = spin_matrices(0.5)
    return {"z": 2 * s["z"], "x": 2 * s["x"], "y_imag": 2 * s["y_imag"]}


def op_on_site(op: np.ndarray, site: int, dims: list[int]) -> np.ndarray:
    """Embed a single-site operator at `site` (0-based) in a product space.

    Site 0 is the slowest index of the product basis.
    """
    out = np.array([[1.0]])
    for i, d in enumerate(dims):
        factor = op if i == site else np.eye(d)
        out = np.kron(out, factor)
    return out


def two_site_op(op_a: np.ndarray, site_a: int, op_b: np.ndarray, site_b: int,
                dims: list[int]) -> np.ndarray:
    """Embed op_a at site_a and op_b at site_b (distinct sites)."""
    if site_a == site_b:
        raise ValueError("sites must differ")
    out = np.array([[1.0]])
    for i, d in enumerate(dims):
        if i == site_a:
            factor = op_a
        elif i == site_b:
            factor = op_b
        else:
            factor = np.eye(d)
        out = np.kron(out, factor)
    return out


def level_hop(dim: int) -> np.ndarray:
    """Lowering-type hop L = sum_s |s><s+1| on a ladder of `dim` levels."""
    lo = np.zeros((dim, dim))
    lo[np.arange(dim - 1), np.arange(1, dim)] = 1.0
    return lo


def bond_hop(dim: int, s: int) -> np.ndarray:
    """Symmetric hop across the single bond (s, s+1): |s><s+1| + |s+1><s|."""
    k = np.zeros((dim, dim))
    k[s, s + 1] = 1.0
    k[s + 1, s] = 1.0
    return k
