"""Lattice models split as H = H0 + V with a single measured site.

Three families are provided:

* ``oscillator_chain`` -- N particles, each on a grid of 2S+1 discrete
  positions s = -S..S inside a quadratic potential eps_s = s^2.  V holds
  the on-site kinetic hop h_x between adjacent levels and a cross-site
  coupling J that correlates hops of neighbouring particles across the
  same level bond: J * sum_i sum_s K_s(i) K_s(i+1) with
  K_s = |s><s+1| + |s+1><s|.

* ``blbq_chain`` -- spin-S chain with on-site fields
  H0 = sum_j (h_z Sz_j + h_x Sx_j) and a bilinear-biquadratic coupling
  V = J sum_i [SxSx + SySy + d SzSz + q((SxSx)^2 + (SySy)^2 + d(SzSz)^2)]
  acting between neighbours (the written half plus its conjugate
  transpose).

* ``spin_half_chain`` -- one system qubit with field B_z^S sigma_z
  coupled to the third site of an XXZ-type bath of N-1 qubits; the
  system-bath coupling J_z sigma_z sigma_z + J_x (sigma_x sigma_x +
  sigma_y sigma_y) is the perturbation V.

Matrices are dense, real and stored in the energy-ordered free basis.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any

import numpy as np

from .basis import FreeBasis, build_free_basis
from .operators import level_hop, op_on_site, pauli_matrices, spin_matrices, two_site_op

DEFAULT_MAX_DIM = 20000

MODEL_NAMES = ("oscillator_chain", "blbq_chain", "spin_half_chain")


@dataclass
class HamiltonianPair:
    """Free Hamiltonian (diagonal) plus perturbation in the free basis."""

    basis: FreeBasis
    h0_diag: np.ndarray
    v: np.ndarray
    params: dict[str, Any]
    # diagonal of the measured-site default observable in the natural basis
    natural_site_values: np.ndarray | None = None

    @property
    def dim(self) -> int:
        return len(self.h0_diag)

    def h0(self) -> np.ndarray:
        return np.diag(self.h0_diag)

    def total(self) -> np.ndarray:
        """Dense H = H0 + V."""
        h = self.v.copy()
        h[np.diag_indices_from(h)] += self.h0_diag
        return h

    @property
    def name(self) -> str:
        return self.params["model"]


@dataclass
class Observable:
    """Measured quantity, diagonal in the natural product basis.

    ``values_natural[p]`` is the eigenvalue carried by natural product
    state p; the projector decomposition groups natural states by
    outcome.  ``outcomes`` is ascending and ``labels_natural[p]`` indexes
    into it.
    """

    name: str
    basis: FreeBasis
    values_natural: np.ndarray
    outcomes: np.ndarray
    labels_natural: np.ndarray
    system_local: bool
    params: dict[str, Any] = field(default_factory=dict)
    _matrix_cache: np.ndarray | None = field(default=None, repr=False)

    @property
    def n_outcomes(self) -> int:
        return len(self.outcomes)

    def matrix(self) -> np.ndarray:
        """Dense free-basis matrix (cached)."""
        if self._matrix_cache is None:
            self._matrix_cache = self.basis.diagonal_to_free(self.values_natural)
        return self._matrix_cache

    def free_diagonal(self) -> np.ndarray:
        """Diagonal elements <phi_alpha|O|phi_alpha> without the full matrix."""
        b = self.basis.vectors()
        return (b * b * self.values_natural[:, None]).sum(axis=0)

    @property
    def diagonal_in_free_basis(self) -> bool:
        m = self.matrix()
        off = m - np.diag(np.diag(m))
        return bool(np.max(np.abs(off)) < 1e-10)

    def projector(self, outcome_index: int) -> np.ndarray:
        """Free-basis projector onto one outcome's eigenspace."""
        mask = (self.labels_natural == outcome_index).astype(float)
        return self.basis.diagonal_to_free(mask)

    def projector_free_diagonal(self, outcome_index: int) -> np.ndarray:
        """Diagonal of P_s in the free basis (enough for Lorentzian averages)."""
        b = self.basis.vectors()
        mask = self.labels_natural == outcome_index
        return (b[mask, :] ** 2).sum(axis=0)


def _check_dim(dim: int, max_dim: int) -> None:
    if dim > max_dim:
        raise ValueError(
            f"model dimension {dim} exceeds the cap {max_dim}; "
            "raise max_dim explicitly if this size is intended"
        )


def _symmetrize_check(v: np.ndarray, tol: float = 1e-12) -> np.ndarray:
    asym = np.max(np.abs(v - v.T))
    if asym > tol:
        raise ValueError(f"perturbation failed the symmetry check: {asym:.3e}")
    return 0.5 * (v + v.T)


def build_oscillator_chain(n_sites: int, spin_cutoff: int, h_x: float, j: float,
                           *, max_dim: int = DEFAULT_MAX_DIM) -> HamiltonianPair:
    """Chain of particles on discretized quadratic potentials.

    `spin_cutoff` is S: each site carries 2S+1 positions s = -S..S with
    on-site energy s^2.  Site 0 is the measured system.
    """
    if n_sites < 1:
        raise ValueError("n_sites must be >= 1")
    if spin_cutoff < 1:
        raise ValueError("spin_cutoff must be >= 1")
    d_site = 2 * spin_cutoff + 1
    dim = d_site ** n_sites
    _check_dim(dim, max_dim)
    dims = [d_site] * n_sites
    positions = np.arange(-spin_cutoff, spin_cutoff + 1, dtype=float)
    eps = positions ** 2

    h_sys = np.diag(eps)
    d_bath = d_site ** (n_sites - 1)
    h_bath = np.zeros((d_bath, d_bath))
    bath_dims = dims[1:]
    for i in range(n_sites - 1):
        h_bath += op_on_site(np.diag(eps), i, bath_dims)

    v = np.zeros((dim, dim))
    hop = level_hop(d_site)
    kin = hop + hop.T
    for i in range(n_sites):
        v += h_x * op_on_site(kin, i, dims)
    # bond term: simultaneous +-1 level hops on adjacent sites
    for i in range(n_sites - 1):
        v += j * two_site_op(kin, i, kin, i + 1, dims)

    basis = build_free_basis(h_sys, h_bath)
    v_free = basis.to_free(_symmetrize_check(v))
    params = {"model": "oscillator_chain", "n_sites": n_sites,
              "spin_cutoff": spin_cutoff, "h_x": h_x, "j": j}
    return HamiltonianPair(basis, basis.energies.copy(), v_free, params,
                           natural_site_values=positions)


def build_blbq_chain(n_sites: int, spin: float, h_z: float, h_x: float,
                     j: float, delta: float, q: float,
                     *, max_dim: int = DEFAULT_MAX_DIM) -> HamiltonianPair:
    """Bilinear-biquadratic spin-S chain with tilted on-site fields."""
    if n_sites < 1:
        raise ValueError("n_sites must be >= 1")
    ops = spin_matrices(spin)
    d_site = ops["z"].shape[0]
    dim = d_site ** n_sites
    _check_dim(dim, max_dim)
    dims = [d_site] * n_sites

    onsite = h_z * ops["z"] + h_x * ops["x"]
    h_sys = onsite
    d_bath = d_site ** (n_sites - 1)
    h_bath = np.zeros((d_bath, d_bath))
    for i in range(n_sites - 1):
        h_bath += op_on_site(onsite, i, dims[1:])

    # S_y x S_y = -(Y x Y) with Y real, so every bond term is real.
    sx, sz, y = ops["x"], ops["z"], ops["y_imag"]
    half = np.zeros((dim, dim))
    for i in range(n_sites - 1):
        xx = op_on_site(sx, i, dims) @ op_on_site(sx, i + 1, dims)
        yy = -op_on_site(y, i, dims) @ op_on_site(y, i + 1, dims)
        zz = op_on_site(sz, i, dims) @ op_on_site(sz, i + 1, dims)
        half += xx + yy + delta * zz
        half += q * (xx @ xx + yy @ yy + delta * (zz @ zz))
    v = 0.5 * j * (half + half.T)   # written half plus its conjugate transpose

    basis = build_free_basis(h_sys, h_bath)
    v_free = basis.to_free(_symmetrize_check(v))
    params = {"model": "blbq_chain", "n_sites": n_sites, "spin": spin,
              "h_z": h_z, "h_x": h_x, "j": j, "delta": delta, "q": q}
    return HamiltonianPair(basis, basis.energies.copy(), v_free, params,
                           natural_site_values=np.diag(ops["z"]).copy())


def build_spin_half_chain(n_sites: int, *, b_z_s: float, b_x_s: float = 0.0,
                          b_z_b: float, b_x_b: float, j_z_b: float, j_x_b: float,
                          j_z_sb: float, j_x_sb: float, n_m: int = 3,
                          max_dim: int = DEFAULT_MAX_DIM) -> HamiltonianPair:
    """System qubit coupled to one central site of an interacting qubit bath.

    The XX pieces use the convention J_x (sx sx + sy sy); the system
    couples to bath site ``n_m`` (1-based over the whole chain).
    """
    if n_sites < 3:
        raise ValueError("n_sites must be >= 3 (system couples to site n_m)")
    if not (2 <= n_m <= n_sites):
        raise ValueError(f"coupling target n_m={n_m} outside chain of {n_sites} sites")
    dim = 2 ** n_sites
    _check_dim(dim, max_dim)
    p = pauli_matrices()
    sx, sz, y = p["x"], p["z"], p["y_imag"]
    dims = [2] * n_sites
    bath_dims = dims[1:]
    n_bath = n_sites - 1

    h_sys = b_z_s * sz + b_x_s * sx
    h_bath = np.zeros((2 ** n_bath, 2 ** n_bath))
    for i in range(n_bath):
        h_bath += b_z_b * op_on_site(sz, i, bath_dims)
        h_bath += b_x_b * op_on_site(sx, i, bath_dims)
    for i in range(n_bath - 1):
        zz = op_on_site(sz, i, bath_dims) @ op_on_site(sz, i + 1, bath_dims)
        xx = op_on_site(sx, i, bath_dims) @ op_on_site(sx, i + 1, bath_dims)
        yy = -op_on_site(y, i, bath_dims) @ op_on_site(y, i + 1, bath_dims)
        h_bath += j_z_b * zz + j_x_b * (xx + yy)

    target = n_m - 1   # 0-based site index in the full chain
    zz = op_on_site(sz, 0, dims) @ op_on_site(sz, target, dims)
    xx = op_on_site(sx, 0, dims) @ op_on_site(sx, target, dims)
    yy = -op_on_site(y, 0, dims) @ op_on_site(y, target, dims)
    v = j_z_sb * zz + j_x_sb * (xx + yy)

    basis = build_free_basis(h_sys, h_bath)
    v_free = basis.to_free(_symmetrize_check(v))
    params = {"model": "spin_half_chain", "n_sites": n_sites, "b_z_s": b_z_s,
              "b_x_s": b_x_s, "b_z_b": b_z_b, "b_x_b": b_x_b, "j_z_b": j_z_b,
              "j_x_b": j_x_b, "j_z_sb": j_z_sb, "j_x_sb": j_x_sb, "n_m": n_m}
    return HamiltonianPair(basis, basis.energies.copy(), v_free, params,
                           natural_site_values=np.diag(sz).copy())


def _unique_outcomes(values: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Ascending distinct values and per-state labels, robust to fp dust."""
    rounded = np.round(values, 10)
    outcomes, labels = np.unique(rounded, return_inverse=True)
    return outcomes, labels


def build_observable(model: HamiltonianPair, name: str, *,
                     value: float | None = None) -> Observable:
    """Construct a named observable for a model.

    Supported names: ``position_site_1`` (oscillator), ``sz_site_1`` and
    ``sz_global`` (spin chains), ``sigma_z_site_1`` (qubit chain) and
    ``projector`` (onto one outcome `value` of the model's measured-site
    default observable).
    """
    basis = model.basis
    kind = model.name
    d_sys, d_bath = basis.d_sys, basis.d_bath
    site_vals = model.natural_site_values

    def site1_values(vals: np.ndarray) -> np.ndarray:
        return np.repeat(vals, d_bath)

    if name == "position_site_1":
        if kind != "oscillator_chain":
            raise ValueError(f"observable {name!r} is not defined for {kind}")
        values = site1_values(site_vals)
        system_local = True
    elif name == "sz_site_1":
        if kind != "blbq_chain":
            raise ValueError(f"observable {name!r} is not defined for {kind}")
        values = site1_values(site_vals)
        system_local = True
    elif name == "sigma_z_site_1":
        if kind != "spin_half_chain":
            raise ValueError(f"observable {name!r} is not defined for {kind}")
        values = site1_values(site_vals)
        system_local = True
    elif name == "sz_global":
        if kind not in ("blbq_chain", "spin_half_chain"):
            raise ValueError(f"observable {name!r} is not defined for {kind}")
        n_sites = model.params["n_sites"]
        d_site = len(site_vals)
        dims = [d_site] * n_sites
        values = np.zeros(basis.dim)
        for i in range(n_sites):
            values += np.diag(op_on_site(np.diag(site_vals), i, dims))
        system_local = False
    elif name == "projector":
        if value is None:
            raise ValueError("projector observable needs the outcome `value`")
        hits = np.nonzero(np.abs(site_vals - value) < 1e-9)[0]
        if len(hits) != 1:
            raise ValueError(f"{value} is not a measured-site outcome of {kind}")
        values = site1_values((np.arange(d_sys) == hits[0]).astype(float))
        system_local = True
    else:
        raise ValueError(f"unknown observable {name!r}")

    outcomes, labels = _unique_outcomes(values)
    return Observable(name=name, basis=basis, values_natural=values,
                      outcomes=outcomes, labels_natural=labels,
                      system_local=system_local,
                      params={"name": name, **({"value": value} if value is not None else {})})


OBSERVABLES_BY_MODEL = {
    "oscillator_chain": ("position_site_1", "projector"),
    "blbq_chain": ("sz_site_1", "sz_global", "projector"),
    "spin_half_chain": ("sigma_z_site_1", "sz_global", "projector"),
}
