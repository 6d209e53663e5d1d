"""Exact diagonalization, smoothed densities of states and the
statistical envelope of eigenstate coefficients.

The central objects are the interacting eigendecomposition
H = H0 + V -> {E_mu, c_mu(alpha)} (coefficients in the free basis) and
the Gaussian-kernel level density D(E).  Mid-spectrum coefficients are
expected to scatter around a Lorentzian envelope
Lambda(dE) = (omega0 * Gamma / pi) / (dE^2 + Gamma^2),
whose width Gamma is extracted here by a one-parameter fit with omega0
pinned to the local mean level spacing.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any

import numpy as np
import scipy.optimize

from .basis import FreeBasis, fix_eigenvector_signs
from .models import HamiltonianPair


@dataclass
class Spectrum:
    """Interacting eigensystem in the energy-ordered free basis."""

    energies: np.ndarray          # E_mu ascending
    coeffs: np.ndarray            # row mu = eigenstate, column alpha = free state
    basis: FreeBasis
    max_residual: float = 0.0
    max_orthonormality_defect: float = 0.0
    _natural_cache: np.ndarray | None = field(default=None, repr=False)

    @property
    def dim(self) -> int:
        return len(self.energies)

    def natural_coeffs(self) -> np.ndarray:
        """Columns = interacting eigenstates in the natural product basis."""
        if self._natural_cache is None:
            self._natural_cache = self.basis.vectors() @ self.coeffs.T
        return self._natural_cache

    def overlaps(self, alpha0: int) -> np.ndarray:
        """a_mu = c_mu(alpha0), the expansion of one free state."""
        return self.coeffs[:, alpha0].copy()


def diagonalize(pair: HamiltonianPair, *, check: bool = True) -> Spectrum:
    """Dense eigh of H = H0 + V with a deterministic sign convention.

    With ``check`` the eigenvector residuals and orthonormality defect
    are measured (two extra matrix products).
    """
    h = pair.total()
    asym = np.max(np.abs(h - h.T))
    if asym > 1e-10:
        raise ValueError(f"H is not symmetric: max asymmetry {asym:.3e}")
    try:
        vals, vecs = np.linalg.eigh(h)
    except np.linalg.LinAlgError as err:  # pragma: no cover - library failure
        raise np.linalg.LinAlgError(f"eigensolver did not converge: {err}") from err
    vecs = fix_eigenvector_signs(vecs)
    residual = 0.0
    defect = 0.0
    if check:
        r = h @ vecs - vecs * vals[None, :]
        residual = float(np.max(np.sqrt((r * r).sum(axis=0))))
        g = vecs.T @ vecs
        g[np.diag_indices_from(g)] -= 1.0
        defect = float(np.max(np.abs(g)))
        if residual > 1e-8:
            raise np.linalg.LinAlgError(
                f"eigenvector residual {residual:.3e} exceeds 1e-8")
    return Spectrum(energies=vals, coeffs=np.ascontiguousarray(vecs.T),
                    basis=pair.basis, max_residual=residual,
                    max_orthonormality_defect=defect)


# ---------------------------------------------------------------------------
# density of states


@dataclass
class DosEstimate:
    """Gaussian-kernel smoothed level density."""

    levels: np.ndarray
    bandwidth: float
    grid: np.ndarray
    density: np.ndarray
    mass: float                    # integral over the grid, should be ~len(levels)

    def evaluate(self, energy) -> np.ndarray | float:
        """Exact kernel sum at arbitrary energies (no grid interpolation)."""
        e = np.atleast_1d(np.asarray(energy, dtype=float))
        norm = 1.0 / (self.bandwidth * np.sqrt(2 * np.pi))
        out = np.empty(len(e))
        for i, x in enumerate(e):
            z = (x - self.levels) / self.bandwidth
            out[i] = norm * np.exp(-0.5 * z * z).sum()
        return out if np.ndim(energy) else float(out[0])

    @property
    def support(self) -> tuple[float, float]:
        """Range where the estimate is considered meaningful."""
        return (float(self.levels.min() - 3 * self.bandwidth),
                float(self.levels.max() + 3 * self.bandwidth))


def default_bandwidth(levels: np.ndarray, factor: float = 5.0) -> float:
    """`factor` times the mean level spacing over the central half."""
    e = np.sort(np.asarray(levels, dtype=float))
    n = len(e)
    if n < 2:
        raise ValueError("need at least two levels for a bandwidth")
    lo, hi = n // 4, max(n // 4 + 2, (3 * n) // 4)
    spacings = np.diff(e[lo:hi])
    mean = float(spacings.mean()) if len(spacings) else float(e[-1] - e[0])
    if mean <= 0:
        mean = max((e[-1] - e[0]) / (n - 1), 1e-12)
    return factor * mean


def estimate_dos(levels: np.ndarray, bandwidth: float | None = None,
                 *, n_grid: int = 2048) -> DosEstimate:
    """Kernel density of a level set, normalized to the number of levels."""
    e = np.sort(np.asarray(levels, dtype=float))
    if len(e) < 2:
        raise ValueError("need at least two levels")
    bw = float(bandwidth) if bandwidth is not None else default_bandwidth(e)
    if bw <= 0:
        raise ValueError("bandwidth must be positive")
    grid = np.linspace(e[0] - 5 * bw, e[-1] + 5 * bw, n_grid)
    # one Gaussian per level, summed on the grid
    z = (grid[:, None] - e[None, :]) / bw
    density = np.exp(-0.5 * z * z).sum(axis=1) / (bw * np.sqrt(2 * np.pi))
    mass = float(np.trapezoid(density, grid))
    return DosEstimate(levels=e, bandwidth=bw, grid=grid, density=density,
                       mass=mass)


def dos_relation_check(total: DosEstimate, bath: DosEstimate,
                       sys_energies: np.ndarray,
                       *, band: tuple[float, float] = (0.25, 0.75)) -> dict[str, Any]:
    """Compare D(E) with sum_s D_B(E - eps_s) over the bulk of the spectrum.

    Returns the maximum relative deviation over grid points whose energy
    lies in the quantile `band` of the total level set.
    """
    e = total.levels
    lo = np.quantile(e, band[0])
    hi = np.quantile(e, band[1])
    pts = total.grid[(total.grid >= lo) & (total.grid <= hi)]
    d_tot = total.evaluate(pts)
    d_sum = np.zeros_like(pts)
    for eps in np.asarray(sys_energies, dtype=float):
        d_sum += bath.evaluate(pts - eps)
    rel = np.abs(d_tot - d_sum) / np.maximum(d_sum, 1e-300)
    return {"max_rel_error": float(np.max(rel)), "band": (float(lo), float(hi)),
            "n_points": int(len(pts))}


# ---------------------------------------------------------------------------
# coefficient envelope


@dataclass
class EnvelopeFit:
    """Binned c^2 statistics against energy distance, with Lorentzian fit."""

    bin_centers: np.ndarray
    bin_means: np.ndarray
    bin_counts: np.ndarray
    gamma: float | None
    omega0: float
    fit_residual: float
    normalization: float           # sum(means) * bin width / omega0, ~1
    window: tuple[int, int]        # interacting index range used
    flag: str | None = None

    @property
    def ok(self) -> bool:
        return self.flag is None and self.gamma is not None and self.gamma > 0


def lorentzian_profile(de: np.ndarray, gamma: float, omega0: float) -> np.ndarray:
    return (omega0 * gamma / np.pi) / (de * de + gamma * gamma)


def fit_envelope(spectrum: Spectrum, *, window_fraction: float = 0.2,
                 n_bins: int = 241, half_width_gammas: float = 30.0,
                 omega0: float | None = None) -> EnvelopeFit:
    """Bin mid-spectrum |c_mu(alpha)|^2 by E_mu - E_alpha and fit the width.

    omega0 is fixed from the local level density at the window centre
    (not fitted); only Gamma is free.  A delta-like profile (V ~ 0) is
    flagged instead of fitted.
    """
    d = spectrum.dim
    n_win = max(int(round(window_fraction * d)), 2)
    lo = (d - n_win) // 2
    hi = lo + n_win
    rows = spectrum.coeffs[lo:hi, :] ** 2
    de = spectrum.energies[lo:hi, None] - spectrum.basis.energies[None, :]

    if omega0 is None:
        center = 0.5 * (spectrum.energies[lo] + spectrum.energies[hi - 1])
        dos = estimate_dos(spectrum.energies)
        local = float(dos.evaluate(center))
        if local <= 0:
            raise ValueError("level density vanished at the window centre")
        omega0 = 1.0 / local

    # coarse pass: locate the half-maximum width to set the binning range
    flat_de = de.ravel()
    flat_c2 = rows.ravel()
    span = float(np.max(np.abs(flat_de)))
    coarse_edges = np.linspace(-span, span, 402)
    csum, _ = np.histogram(flat_de, bins=coarse_edges, weights=flat_c2)
    ccount, _ = np.histogram(flat_de, bins=coarse_edges)
    cmean = np.where(ccount > 0, csum / np.maximum(ccount, 1), 0.0)
    peak = cmean.max()
    if peak <= 0:
        raise ValueError("all coefficients vanished in the fit window")
    # mass concentrated in one coarse bin means a delta-like envelope
    if csum.max() / max(csum.sum(), 1e-300) > 0.5:
        return EnvelopeFit(bin_centers=np.array([0.0]), bin_means=np.array([peak]),
                           bin_counts=np.array([int(ccount[np.argmax(csum)])]),
                           gamma=None, omega0=omega0, fit_residual=0.0,
                           normalization=1.0, window=(lo, hi), flag="delta_like")
    above = np.nonzero(cmean > 0.5 * peak)[0]
    centers_coarse = 0.5 * (coarse_edges[:-1] + coarse_edges[1:])
    half_width = max(abs(centers_coarse[above[0]]), abs(centers_coarse[above[-1]]),
                     coarse_edges[1] - coarse_edges[0])

    half = min(half_width_gammas * half_width, span)
    edges = np.linspace(-half, half, n_bins + 1)
    wsum, _ = np.histogram(flat_de, bins=edges, weights=flat_c2)
    count, _ = np.histogram(flat_de, bins=edges)
    keep = count > 0
    centers = 0.5 * (edges[:-1] + edges[1:])[keep]
    means = wsum[keep] / count[keep]
    width = edges[1] - edges[0]
    normalization = float(means.sum() * width / omega0)

    def model(x, gamma):
        return lorentzian_profile(x, gamma, omega0)

    gamma0 = max(half_width, 1e-12)
    try:
        popt, _ = scipy.optimize.curve_fit(model, centers, means, p0=[gamma0],
                                           bounds=(1e-15, np.inf), maxfev=10000)
    except RuntimeError as err:
        raise RuntimeError(f"envelope fit did not converge: {err}") from err
    gamma = float(popt[0])
    resid = float(np.sqrt(np.mean((means - model(centers, gamma)) ** 2)) / peak)
    return EnvelopeFit(bin_centers=centers, bin_means=means,
                       bin_counts=count[keep].astype(int), gamma=gamma,
                       omega0=float(omega0), fit_residual=resid,
                       normalization=normalization, window=(lo, hi))
