"""Unmeasured dynamics of free initial states and what it relaxes to.

Everything runs through the exact eigenphases: for a free initial state
alpha0 with overlaps a_mu = c_mu(alpha0),

    <O(t)> = sum_{mu,nu} a_mu a_nu cos((E_mu - E_nu) t) O_mu_nu,

so there is no time-step error.  Relaxation is characterised by a fit to
A exp(-2 Gamma t) + B, and the equilibrium by the diagonal-ensemble
moments: the distribution-level variance sigma^2 of the observable and
the much smaller time-fluctuation variance delta^2 of <O(t)> itself.
Their ratio measures the level density, sigma^2/delta^2 = 4 pi D(E) Gamma.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Sequence

import numpy as np
import scipy.optimize

from .models import Observable
from .spectral import DosEstimate, Spectrum


class FitError(RuntimeError):
    """Raised when a relaxation fit cannot be carried out."""

    def __init__(self, message: str, residual: float | None = None):
        super().__init__(message)
        self.residual = residual


def observable_in_eigenbasis(spectrum: Spectrum, observable: Observable) -> np.ndarray:
    """O in the interacting eigenbasis (dense, symmetric).

    Costs two dense matrix products; reuse the result when evolving many
    initial states of the same model.
    """
    vn = spectrum.natural_coeffs()
    return (vn.T * observable.values_natural[None, :]) @ vn


@dataclass
class EvolutionSeries:
    times: np.ndarray
    values: np.ndarray
    alpha0: int
    observable_name: str
    imag_residual: float


def log_time_grid(t_min: float, t_max: float, n: int = 240) -> np.ndarray:
    """Log-spaced times with t=0 prepended (decay-resolving default)."""
    if not (0 < t_min < t_max):
        raise ValueError("need 0 < t_min < t_max")
    return np.concatenate(([0.0], np.geomspace(t_min, t_max, n)))


def relaxation_timescale(spectrum: Spectrum, observable: Observable,
                         alpha0: int, o_inf: float, *,
                         obs_eig: np.ndarray | None = None,
                         t_span: tuple[float, float] = (1e-3, 1e3)) -> float:
    """Half-life of |<O(t)> - o_inf| from a coarse logarithmic scan.

    Used to size linear fit grids: least squares on a log grid would
    over-weight the early shoulder, so fits happen on a linear grid a
    dozen half-lives long.  Raises FitError when the deviation never
    falls below half its initial value (frozen dynamics).
    """
    times = log_time_grid(t_span[0], t_span[1], 160)
    series = evolve_expectation(spectrum, observable, alpha0, times,
                                obs_eig=obs_eig)
    dev = np.abs(series.values - o_inf)
    if dev[0] <= 0:
        raise FitError("initial state already equilibrated; nothing to fit")
    below = np.nonzero(dev < 0.5 * dev[0])[0]
    for i in below:
        if i + 2 < len(dev) and np.all(dev[i:i + 3] < 0.75 * dev[0]):
            return float(times[i])
    raise FitError("observable deviation never halved; dynamics look frozen")


def evolve_expectation(spectrum: Spectrum, observable: Observable,
                       alpha0: int | np.ndarray, times: Sequence[float],
                       *, obs_eig: np.ndarray | None = None) -> EvolutionSeries:
    """<O(t)> for a free eigenstate index (or explicit free-basis vector)."""
    t = np.asarray(times, dtype=float)
    if np.any(t < 0):
        raise ValueError("times must be non-negative")
    if obs_eig is None:
        obs_eig = observable_in_eigenbasis(spectrum, observable)
    if np.isscalar(alpha0) or np.ndim(alpha0) == 0:
        idx = int(alpha0)
        a = spectrum.overlaps(idx)
    else:
        vec = np.asarray(alpha0, dtype=float)
        if vec.shape != (spectrum.dim,):
            raise ValueError("initial vector has the wrong dimension")
        nrm = np.linalg.norm(vec)
        if abs(nrm - 1.0) > 1e-10:
            raise ValueError("initial vector must be normalized")
        a = spectrum.coeffs @ vec
        idx = -1
    phases = np.exp(-1j * spectrum.energies[:, None] * t[None, :])
    b = a[:, None] * phases
    u = obs_eig @ b
    vals = np.einsum("it,it->t", b.conj(), u)
    resid = float(np.max(np.abs(vals.imag))) if len(t) else 0.0
    if resid > 1e-10:
        raise ValueError(f"imaginary residue {resid:.3e} exceeds tolerance")
    lo, hi = observable.outcomes[0], observable.outcomes[-1]
    out = vals.real
    if np.any(out < lo - 1e-8) or np.any(out > hi + 1e-8):
        raise ValueError("expectation left the observable's spectral range")
    return EvolutionSeries(times=t, values=out, alpha0=idx,
                           observable_name=observable.name, imag_residual=resid)


# ---------------------------------------------------------------------------
# initial-state selection


def select_initial_state(spectrum_or_basis, observable: Observable, *,
                         band: tuple[float, float] = (0.25, 0.75),
                         rule: str = "max_observable") -> tuple[int, dict[str, Any]]:
    """Pick a free initial state inside an energy-quantile band.

    ``max_observable`` takes the state maximizing <phi|O|phi> within the
    band (ties broken by distance to the median energy); ``median`` just
    takes the state closest to the median of the band.
    """
    basis = getattr(spectrum_or_basis, "basis", spectrum_or_basis)
    energies = basis.energies
    lo = np.quantile(energies, band[0])
    hi = np.quantile(energies, band[1])
    inside = np.nonzero((energies >= lo) & (energies <= hi))[0]
    if len(inside) == 0:
        raise ValueError("energy band contains no free states")
    diag = observable.free_diagonal()[inside]
    median = np.median(energies)
    if rule == "max_observable":
        best = diag.max()
        cands = inside[diag >= best - 1e-9]
    elif rule == "median":
        cands = inside
    else:
        raise ValueError(f"unknown selection rule {rule!r}")
    alpha0 = int(cands[np.argmin(np.abs(energies[cands] - median))])
    info = {"band": (float(lo), float(hi)), "n_candidates": int(len(cands)),
            "o_start": float(observable.free_diagonal()[alpha0]),
            "e_alpha0": float(energies[alpha0])}
    return alpha0, info


def spread_states(basis, *, band: tuple[float, float] = (0.25, 0.75),
                  n_states: int = 10, s_label: int | None = None) -> list[int]:
    """Free states spread evenly in energy across a quantile band.

    With ``s_label`` only product states whose system label equals it are
    eligible (e.g. system prepared in its maximal-observable level).
    """
    energies = basis.energies
    lo, hi = np.quantile(energies, band[0]), np.quantile(energies, band[1])
    mask = (energies >= lo) & (energies <= hi)
    if s_label is not None:
        mask &= basis.s_of_alpha == s_label
    pool = np.nonzero(mask)[0]
    if len(pool) == 0:
        raise ValueError("no eligible states in the requested band")
    if len(pool) <= n_states:
        return [int(i) for i in pool]
    # spread by pool position (uniform in integrated DOS), not by energy
    # value: comby free spectra have few distinct energies but many states
    idx = np.round(np.linspace(0, len(pool) - 1, n_states)).astype(int)
    return sorted({int(pool[i]) for i in idx})


# ---------------------------------------------------------------------------
# relaxation fit


@dataclass
class DecayFit:
    gamma: float | None
    o_start: float
    o_end: float
    residual_rms: float
    amplitude: float
    window: tuple[float, float]
    flag: str | None = None

    @property
    def ok(self) -> bool:
        return self.flag is None and self.gamma is not None and self.gamma > 0


def _initial_gamma_guess(t: np.ndarray, v: np.ndarray, plateau: float) -> float:
    dev = np.abs(v - plateau)
    peak = dev[0]
    if peak <= 0:
        return 1.0
    below = np.nonzero(dev < 0.5 * peak)[0]
    t_half = t[below[0]] if len(below) and below[0] > 0 else t[-1] * 0.25
    if t_half <= 0:
        t_half = t[1] if len(t) > 1 else 1.0
    return float(np.log(2) / (2 * t_half))


def default_fit_window(times: np.ndarray, values: np.ndarray,
                       delta2: float | None = None) -> tuple[float, float]:
    """[0, t*]: t* is one decay time past the first stay inside the plateau band.

    The band is +-2 sqrt(delta2) around the tail mean (tail variance when
    delta2 is not supplied).
    """
    t = np.asarray(times, dtype=float)
    v = np.asarray(values, dtype=float)
    tail = v[3 * len(v) // 4:]
    plateau = float(tail.mean())
    band = 2 * np.sqrt(delta2) if delta2 else 2 * float(tail.std())
    if band <= 0:
        return (float(t[0]), float(t[-1]))
    gamma = _initial_gamma_guess(t, v, plateau)
    decay_time = 1.0 / (2 * gamma)
    inside = np.abs(v - plateau) <= band
    for i in range(len(t)):
        if not inside[i]:
            continue
        j = np.searchsorted(t, t[i] + decay_time)
        if inside[i:min(j + 1, len(t))].all():
            return (float(t[0]), float(min(t[i] + decay_time, t[-1])))
    return (float(t[0]), float(t[-1]))


def fit_decay(times: Sequence[float], values: Sequence[float], *,
              delta2: float | None = None,
              window: tuple[float, float] | None = None) -> DecayFit:
    """Least-squares fit of A exp(-2 Gamma t) + B over a plateau-aware window."""
    t = np.asarray(times, dtype=float)
    v = np.asarray(values, dtype=float)
    if len(t) < 5:
        raise FitError("need at least 5 samples to fit a decay")
    if window is None:
        window = default_fit_window(t, v, delta2)
    sel = (t >= window[0]) & (t <= window[1])
    if sel.sum() < 5:
        sel = np.ones_like(t, dtype=bool)
        window = (float(t[0]), float(t[-1]))
    tw, vw = t[sel], v[sel]

    spread = float(vw.max() - vw.min())
    scale = max(abs(vw).max(), 1.0)
    if spread < 1e-9 * scale:
        return DecayFit(gamma=None, o_start=float(v[0]), o_end=float(vw.mean()),
                        residual_rms=0.0, amplitude=0.0, window=window,
                        flag="constant_series")

    plateau = float(vw[3 * len(vw) // 4:].mean())
    amp0 = float(vw[0] - plateau)
    gamma0 = _initial_gamma_guess(tw, vw, plateau)

    def model(x, a, gamma, b):
        return a * np.exp(-2 * gamma * x) + b

    try:
        popt, _ = scipy.optimize.curve_fit(
            model, tw, vw, p0=[amp0, gamma0, plateau],
            bounds=([-np.inf, 1e-12, -np.inf], [np.inf, np.inf, np.inf]),
            maxfev=20000)
    except RuntimeError as err:
        best = float(np.sqrt(np.mean((vw - model(tw, amp0, gamma0, plateau)) ** 2)))
        raise FitError(f"decay fit did not converge: {err}", residual=best) from err
    a_fit, gamma, b_fit = (float(x) for x in popt)
    resid = float(np.sqrt(np.mean((vw - model(tw, a_fit, gamma, b_fit)) ** 2)))
    return DecayFit(gamma=gamma, o_start=a_fit + b_fit, o_end=b_fit,
                    residual_rms=resid, amplitude=a_fit, window=window)


# ---------------------------------------------------------------------------
# equilibrium fluctuations


@dataclass
class FluctuationReport:
    alpha0: int
    e_alpha0: float
    o_infinity: float
    sigma2: float
    delta2: float
    ratio: float
    gamma_used: float | None
    dos_inferred: float | None
    n_degenerate_pairs: int


def _degenerate_groups(energies: np.ndarray, tol: float) -> list[np.ndarray]:
    """Indices grouped by chained energy coincidence within tol."""
    breaks = np.nonzero(np.diff(energies) > tol)[0] + 1
    return [g for g in np.split(np.arange(len(energies)), breaks) if len(g) > 1]


def equilibrium_fluctuations(spectrum: Spectrum, observable: Observable,
                             alpha0: int, *, gamma: float | None = None,
                             obs_eig: np.ndarray | None = None,
                             degeneracy_tol: float = 1e-10) -> FluctuationReport:
    """Diagonal-ensemble mean, distribution variance and time-fluctuation
    variance of an observable for one free initial state.

    Degenerate level pairs (gap below `degeneracy_tol`) contribute to the
    time average rather than the fluctuations.  With `gamma` the level
    density implied by sigma^2/delta^2 = 4 pi D Gamma is reported.
    """
    if obs_eig is None:
        obs_eig = observable_in_eigenbasis(spectrum, observable)
    a = spectrum.overlaps(alpha0)
    w = a * a
    m = (a[:, None] * a[None, :]) * obs_eig

    o_inf = float(np.trace(m))
    delta2 = float((m * m).sum() - np.trace(m * m))
    n_deg = 0
    for g in _degenerate_groups(spectrum.energies, degeneracy_tol):
        block = m[np.ix_(g, g)]
        off = block.sum() - np.trace(block)
        o_inf += float(off)
        delta2 -= float((block * block).sum() - np.trace(block * block))
        n_deg += len(g) * (len(g) - 1)

    o2_diag = (obs_eig * obs_eig).sum(axis=1)   # (O^2)_mumu
    sigma2 = float((w * o2_diag).sum() - o_inf ** 2)
    ratio = sigma2 / delta2 if delta2 > 0 else np.inf
    dos = ratio / (4 * np.pi * gamma) if (gamma and delta2 > 0) else None
    return FluctuationReport(alpha0=alpha0,
                             e_alpha0=float(spectrum.basis.energies[alpha0]),
                             o_infinity=o_inf, sigma2=sigma2, delta2=delta2,
                             ratio=ratio, gamma_used=gamma, dos_inferred=dos,
                             n_degenerate_pairs=n_deg)


# ---------------------------------------------------------------------------
# level-density measurement from relaxation observables


def integral_rate(times: np.ndarray, values: np.ndarray, o_inf: float) -> float:
    """Area-matched exponential rate: amp / (2 * integral of the deviation).

    Equals the fitted Gamma for a pure A exp(-2 Gamma t) + B series, and
    stays well-defined when the relaxation rings through the plateau or
    carries a slow second stage (the lobes enter the area with sign).
    """
    t = np.asarray(times, dtype=float)
    dev = np.asarray(values, dtype=float) - o_inf
    area = float(np.trapezoid(dev, t))
    if area == 0.0:
        raise FitError("deviation area vanishes; no relaxation rate")
    return float(dev[0] / (2.0 * area))


def measure_dos_experiment(spectrum: Spectrum, observable: Observable,
                           states: Sequence[int], *, t_max: float | None = None,
                           n_times: int = 240,
                           dos_exact: DosEstimate | None = None) -> list[dict[str, Any]]:
    """Infer D(E) from (Gamma, sigma^2, delta^2) for several initial states.

    Each row reports the inferred density next to the kernel-counted one
    at the same free energy.  With t_max=None the window is sized per
    state from a coarse half-life probe.  The rate entering the inference
    is the area-matched one (robust to ringing); the plain least-squares
    fit is reported alongside for context.
    """
    obs_eig = observable_in_eigenbasis(spectrum, observable)
    rows: list[dict[str, Any]] = []
    for alpha0 in states:
        fluct = equilibrium_fluctuations(spectrum, observable, alpha0,
                                         obs_eig=obs_eig)
        gamma = gamma_fit = None
        resid, flag = np.nan, None
        try:
            if t_max is None:
                t_half = relaxation_timescale(spectrum, observable, alpha0,
                                              fluct.o_infinity, obs_eig=obs_eig)
                times = np.linspace(0.0, 18.0 * t_half, n_times)
            else:
                times = np.linspace(0.0, t_max, n_times)
            series = evolve_expectation(spectrum, observable, alpha0, times,
                                        obs_eig=obs_eig)
            gamma = integral_rate(series.times, series.values, fluct.o_infinity)
            if gamma <= 0:
                gamma, flag = None, "nonpositive_rate"
            fit = fit_decay(series.times, series.values, delta2=fluct.delta2)
            gamma_fit = fit.gamma if fit.ok else None
            resid = fit.residual_rms
            flag = flag or fit.flag
        except FitError as err:
            flag = flag or "fit_error"
            resid = err.residual if err.residual is not None else np.nan
        e0 = float(spectrum.basis.energies[alpha0])
        row = {"alpha0": int(alpha0), "e_alpha0": e0, "gamma": gamma,
               "gamma_fit": gamma_fit,
               "sigma2": fluct.sigma2, "delta2": fluct.delta2,
               "fit_residual": resid, "flag": flag,
               "dos_inferred": (fluct.ratio / (4 * np.pi * gamma)) if gamma else None,
               "dos_exact": float(dos_exact.evaluate(e0)) if dos_exact else None}
        rows.append(row)
    return rows
