"""Quantum-jump trajectories: repeated projective measurement of a system
observable interleaved with exact unitary evolution.

One measurement step is

    psi -> U(dt) psi,   sample s with prob ||P_s psi||^2,   psi -> P_s psi / ||.||,

with P_s projecting onto the observable's eigenvalue-s sector of the
system factor (never onto full many-body eigenstates).  Evolution uses
exact eigenphases, so there is no time-step error budget; the only
stochastic element is outcome sampling, driven by one independent
counter-based stream per trajectory so ensembles are reproducible and
order-independent.

The ensemble runner aggregates outcome records into the quantities the
measurement chain is supposed to reproduce: the decaying mean
trajectory and its fitted rate, the outcome histogram p(s, t_j) with its
Gibbs entropy, lag-dt transition counts, and the energy spread across
realizations.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Sequence

import numpy as np

from .dynamics import FitError, evolve_expectation, fit_decay
from .models import Observable
from .rmt import gibbs_entropy
from .spectral import Spectrum

__all__ = [
    "MeasurementEngine", "TrajectoryRecord", "EnsembleStats", "run_trajectory",
    "ensemble_run", "count_transitions", "consistent_histories_check",
    "energy_drift_report", "single_trajectory_entropy",
]


class NumericalLossError(RuntimeError):
    """Raised when the propagated state loses its norm."""


def _seed_key(base_seed, index: int) -> tuple[int, ...]:
    if isinstance(base_seed, (tuple, list)):
        return tuple(int(x) for x in base_seed) + (int(index),)
    return (int(base_seed), int(index))


@dataclass
class TrajectoryRecord:
    """Outcome and energy record of a single measured trajectory."""

    seed_key: tuple[int, ...]
    dt: float
    outcomes: np.ndarray        # measured values s_0 ... s_N
    labels: np.ndarray          # outcome indices into Observable.outcomes
    energies: np.ndarray        # <H> after each collapse (entry 0: initial state)
    model: str = ""
    observable: str = ""


class MeasurementEngine:
    """Batched propagate-measure-collapse loop for one (spectrum, observable).

    All trajectories in a batch share the BLAS-3 basis rotations; each
    consumes only its own uniform stream, so results are identical to
    running trajectories one at a time.
    """

    def __init__(self, spectrum: Spectrum, observable: Observable):
        if observable.basis is not spectrum.basis:
            if observable.basis.dim != spectrum.basis.dim:
                raise ValueError("observable and spectrum live on different spaces")
        self.spectrum = spectrum
        self.observable = observable
        self.natural = spectrum.natural_coeffs()      # columns: eigenstates
        self.energies = spectrum.energies
        labels = observable.labels_natural
        self.n_outcomes = observable.n_outcomes
        self._order = np.argsort(labels, kind="stable")
        self._sorted_labels = labels[self._order]
        self._segments = np.searchsorted(self._sorted_labels,
                                         np.arange(self.n_outcomes))
        self._labels_natural = labels

    # -- small dense helpers (real rotation applied to split re/im parts;
    #    keeping the parts contiguous stays on the fast BLAS-3 path) ------

    def _to_natural(self, a: np.ndarray) -> np.ndarray:
        n = self.natural
        return (n @ np.ascontiguousarray(a.real)
                + 1j * (n @ np.ascontiguousarray(a.imag)))

    def _to_eigen(self, x: np.ndarray) -> np.ndarray:
        n = self.natural
        return (n.T @ np.ascontiguousarray(x.real)
                + 1j * (n.T @ np.ascontiguousarray(x.imag)))

    def sector_probabilities(self, x_natural: np.ndarray) -> np.ndarray:
        """P[s, k] = weight of outcome sector s in column k."""
        x2 = (x_natural.real ** 2 + x_natural.imag ** 2)[self._order]
        return np.add.reduceat(x2, self._segments, axis=0)

    def run_batch(self, psi0_natural: np.ndarray, dt: float, n_meas: int,
                  seed_keys: Sequence[tuple[int, ...]]):
        """Propagate len(seed_keys) trajectories; returns (labels, energies).

        Shapes are (n_meas + 1, n_traj); row 0 holds the prepared state's
        dominant sector and exact energy.
        """
        m = len(seed_keys)
        psi0 = np.asarray(psi0_natural, dtype=complex).reshape(-1)
        norm = np.linalg.norm(psi0)
        if abs(norm - 1.0) > 1e-8:
            raise ValueError("initial state must be normalized")
        psi0 = psi0 / norm

        uniforms = np.empty((n_meas, m))
        for k, key in enumerate(seed_keys):
            rng = np.random.default_rng(np.random.SeedSequence(key))
            uniforms[:, k] = rng.random(n_meas)

        n = self.natural
        a0 = self._to_eigen(psi0[:, None])
        a_re = np.tile(np.ascontiguousarray(a0.real), (1, m))
        a_im = np.tile(np.ascontiguousarray(a0.imag), (1, m))
        cos_p = np.cos(self.energies * dt)[:, None]
        sin_p = np.sin(self.energies * dt)[:, None]

        labels = np.empty((n_meas + 1, m), dtype=np.int16)
        energies = np.empty((n_meas + 1, m))
        p0 = self.sector_probabilities(psi0[:, None])[:, 0]
        labels[0] = int(np.argmax(p0))
        energies[0] = float(self.energies @ (a_re[:, 0] ** 2 + a_im[:, 0] ** 2))

        cols = np.arange(m)
        for j in range(n_meas):
            # (a_re + i a_im) * exp(-i E dt), parts kept separate
            a_re, a_im = (a_re * cos_p + a_im * sin_p,
                          a_im * cos_p - a_re * sin_p)
            x_re = n @ a_re
            x_im = n @ a_im
            x2 = (x_re ** 2 + x_im ** 2)[self._order]
            probs = np.add.reduceat(x2, self._segments, axis=0)
            total = probs.sum(axis=0)
            if np.max(np.abs(total - 1.0)) > 1e-10:
                raise NumericalLossError(
                    f"sector probabilities sum to {total.min():.15f}.."
                    f"{total.max():.15f} at step {j}")
            cum = np.cumsum(probs, axis=0)
            chosen = np.minimum((cum < uniforms[j][None, :]).sum(axis=0),
                                self.n_outcomes - 1)
            picked = probs[chosen, cols]
            if np.any(picked < 1e-14):
                raise NumericalLossError(
                    f"collapse onto a sector of weight < 1e-14 at step {j}")
            weight = (self._labels_natural[:, None] == chosen[None, :]) \
                / np.sqrt(picked)[None, :]
            x_re *= weight
            x_im *= weight
            a_re = n.T @ x_re
            a_im = n.T @ x_im
            labels[j + 1] = chosen
            energies[j + 1] = self.energies @ (a_re ** 2 + a_im ** 2)

        e_min, e_max = self.energies[0], self.energies[-1]
        if energies.min() < e_min - 1e-8 or energies.max() > e_max + 1e-8:
            raise NumericalLossError("trajectory energy left the spectral range")
        return labels, energies


def free_state_vector(basis, alpha: int) -> np.ndarray:
    """Free eigenstate |phi_alpha> expressed in the natural product basis."""
    return basis.vectors()[:, alpha].copy()


def run_trajectory(spectrum: Spectrum, psi0_natural: np.ndarray,
                   observable: Observable, dt: float, n_meas: int,
                   seed) -> TrajectoryRecord:
    """Single measured trajectory; deterministic given the seed."""
    engine = MeasurementEngine(spectrum, observable)
    key = tuple(seed) if isinstance(seed, (tuple, list)) else (int(seed),)
    labels, energies = engine.run_batch(psi0_natural, dt, n_meas, [key])
    lab = labels[:, 0].astype(int)
    return TrajectoryRecord(seed_key=key, dt=dt,
                            outcomes=observable.outcomes[lab],
                            labels=lab, energies=energies[:, 0],
                            observable=observable.name)


@dataclass
class EnsembleStats:
    """Aggregated statistics of an ensemble of measured trajectories."""

    dt: float
    n_real: int
    times: np.ndarray
    outcomes: np.ndarray               # observable outcome values (ascending)
    mean_trajectory: np.ndarray
    mean_se: np.ndarray
    empirical_p: np.ndarray            # (n_steps+1, n_outcomes), rows sum to 1
    empirical_p_se: np.ndarray
    entropy_series: np.ndarray
    entropy_se: np.ndarray
    energy_mean: np.ndarray
    energy_std: np.ndarray
    labels: np.ndarray                 # (n_steps+1, n_real) outcome indices
    energies: np.ndarray               # (n_steps+1, n_real)
    gamma_qj: float | None = None
    gamma_flag: str | None = None
    fit_window: tuple[float, float] | None = None
    single_trajectory_entropy: float | None = None
    single_trajectory_info: dict[str, Any] = field(default_factory=dict)


def single_trajectory_entropy(labels: np.ndarray, dt: float, n_outcomes: int,
                              gamma_ref: float | None) -> dict[str, Any]:
    """Entropy of one record's pooled outcome histogram, transient removed.

    The first 3/(2 gamma_ref) of evolution is discarded so only the
    equilibrated tail contributes; without a reference rate the first
    quarter of the record is dropped instead.
    """
    n_total = len(labels)
    if gamma_ref is not None and gamma_ref > 0:
        j_min = int(np.ceil(3.0 / (2 * gamma_ref) / dt))
    else:
        j_min = n_total // 4
    j_min = min(max(j_min, 1), n_total - 1)
    kept = labels[j_min:]
    counts = np.bincount(kept, minlength=n_outcomes)
    p = counts / counts.sum()
    return {"entropy": gibbs_entropy(p), "histogram": p,
            "n_used": int(len(kept)), "transient_steps": int(j_min)}


def ensemble_run(spectrum: Spectrum, observable: Observable,
                 psi0_natural: np.ndarray, dt: float, n_meas: int,
                 n_real: int, base_seed, *, gamma_ref: float | None = None,
                 engine: MeasurementEngine | None = None) -> EnsembleStats:
    """Run n_real trajectories and aggregate their statistics.

    gamma_ref (the unmeasured decay rate, when known) sets the transient
    cut for the single-trajectory entropy; the mean-trajectory rate fit
    uses the same plateau-band window rule as the unmeasured decay fits.
    """
    if n_real < 2:
        raise ValueError("need at least two realizations")
    if engine is None:
        engine = MeasurementEngine(spectrum, observable)
    seed_keys = [_seed_key(base_seed, k) for k in range(n_real)]
    labels, energies = engine.run_batch(psi0_natural, dt, n_meas, seed_keys)

    k = observable.n_outcomes
    times = np.arange(n_meas + 1) * dt
    values = observable.outcomes[labels]
    mean = values.mean(axis=1)
    mean_se = values.std(axis=1, ddof=1) / np.sqrt(n_real)

    counts = np.stack([np.bincount(row, minlength=k) for row in labels])
    p = counts / n_real
    p_se = np.sqrt(p * (1 - p) / n_real)

    entropy = np.array([gibbs_entropy(row) for row in p])
    with np.errstate(divide="ignore", invalid="ignore"):
        lnp = np.where(p > 0, np.log(p), 0.0)
    ent_var = (p * lnp ** 2).sum(axis=1) - ((p * lnp).sum(axis=1)) ** 2
    entropy_se = np.sqrt(np.clip(ent_var, 0.0, None) / n_real)

    gamma_qj = None
    gamma_flag = None
    window = None
    try:
        fit = fit_decay(times, mean)
        gamma_qj, window, gamma_flag = fit.gamma, fit.window, fit.flag
    except FitError as err:
        gamma_flag = f"fit_failed: {err}"

    st = single_trajectory_entropy(labels[:, 0], dt, k,
                                   gamma_ref if gamma_ref else gamma_qj)

    return EnsembleStats(
        dt=dt, n_real=n_real, times=times, outcomes=observable.outcomes,
        mean_trajectory=mean, mean_se=mean_se, empirical_p=p,
        empirical_p_se=p_se, entropy_series=entropy, entropy_se=entropy_se,
        energy_mean=energies.mean(axis=1), energy_std=energies.std(axis=1, ddof=1),
        labels=labels, energies=energies, gamma_qj=gamma_qj,
        gamma_flag=gamma_flag, fit_window=window,
        single_trajectory_entropy=st["entropy"], single_trajectory_info=st)


def simulate_kernel_chain(kernel, dt: float, n_meas: int, n_real: int,
                          base_seed, s0: int) -> np.ndarray:
    """Sample the classical Markov chain the interpolation kernel defines.

    This is the process for which the kernel is exact (the measured
    quantum chain shares its one-step conditional mean but not the full
    conditional distributions), so it is the reference when validating
    transition counting and rate recovery end to end.  Labels come back
    in the run_batch layout, (n_meas + 1, n_real), every chain starting
    from outcome index s0.  Per-realization seed streams keep results
    independent of batching, as for the quantum engine.
    """
    kmat = kernel.matrix(dt)
    n_out = kmat.shape[0]
    if not 0 <= s0 < n_out:
        raise ValueError("s0 outside the kernel's outcome range")
    cum = np.cumsum(kmat, axis=1)
    uniforms = np.empty((n_real, n_meas))
    for r in range(n_real):
        rng = np.random.default_rng(np.random.SeedSequence(_seed_key(base_seed, r)))
        uniforms[r] = rng.random(n_meas)
    labels = np.empty((n_meas + 1, n_real), dtype=np.int16)
    state = np.full(n_real, s0, dtype=np.intp)
    labels[0] = state
    for j in range(n_meas):
        rows = cum[state]
        state = np.minimum((rows < uniforms[:, j][:, None]).sum(axis=1),
                           n_out - 1)
        labels[j + 1] = state
    return labels


def count_transitions(labels: np.ndarray, n_outcomes: int, *, lag: int = 1,
                      start: int = 0) -> np.ndarray:
    """counts[i, f]: observed i -> f transitions at the given step lag."""
    if lag < 1:
        raise ValueError("lag must be at least one step")
    if labels.ndim == 1:
        labels = labels[:, None]
    if len(labels) <= start + lag:
        raise ValueError("record too short for the requested lag")
    src = labels[start:-lag].ravel()
    dst = labels[start + lag:].ravel()
    counts = np.zeros((n_outcomes, n_outcomes), dtype=np.int64)
    np.add.at(counts, (src, dst), 1)
    return counts


def transition_z_scores(counts: np.ndarray, kernel_matrix: np.ndarray,
                        min_expected: float = 5.0) -> tuple[np.ndarray, np.ndarray]:
    """Per-entry binomial z-scores of transition counts against a kernel.

    Entries whose expected count (either way) falls below min_expected are
    masked out; the normal approximation is meaningless there.  Returns
    (z, mask) shaped like the kernel matrix.
    """
    counts = np.asarray(counts, dtype=float)
    n_i = counts.sum(axis=1, keepdims=True)
    expected = n_i * kernel_matrix
    with np.errstate(divide="ignore", invalid="ignore"):
        z = (counts - expected) / np.sqrt(expected * (1.0 - kernel_matrix))
    mask = (expected >= min_expected) & ((n_i - expected) >= min_expected)
    return z, mask


def consistent_histories_check(stats: EnsembleStats, spectrum: Spectrum,
                               observable: Observable, psi0_natural: np.ndarray,
                               probe_steps: Sequence[int] | None = None) -> dict[str, Any]:
    """Measured ensemble mean versus unmeasured <O(t)> at probe times.

    Probe times are multiples of dt; step 0 is excluded by default since
    both sides are then fixed by preparation (zero standard error).
    """
    n_steps = len(stats.times) - 1
    if probe_steps is None:
        probe_steps = range(1, n_steps + 1)
    probe_steps = [int(j) for j in probe_steps]
    if any(j < 1 or j > n_steps for j in probe_steps):
        raise ValueError("probe steps outside the recorded range")
    t_probe = stats.times[probe_steps]
    # evolve_expectation takes free-basis components
    vec_free = spectrum.basis.vectors().T @ np.asarray(psi0_natural, dtype=float)
    series = evolve_expectation(spectrum, observable, vec_free, t_probe)
    rows = []
    worst = 0.0
    for j, t, ref in zip(probe_steps, t_probe, series.values):
        diff = stats.mean_trajectory[j] - ref
        se = stats.mean_se[j]
        z = diff / se if se > 0 else (0.0 if abs(diff) < 1e-12 else np.inf)
        worst = max(worst, abs(z))
        rows.append({"step": j, "time": float(t), "measured": float(stats.mean_trajectory[j]),
                     "unmeasured": float(ref), "se": float(se), "z": float(z)})
    return {"rows": rows, "max_abs_z": float(worst)}


def energy_drift_report(stats: EnsembleStats, spectrum: Spectrum, *,
                        tail_fraction: float = 0.5) -> dict[str, Any]:
    """Relative energy spread across realizations, sigma_E(t) / Delta_E.

    Delta_E is the full spectral width; the time average excludes step 0
    (identical preparation, zero spread by construction).  delta_e_inf
    is the late-time temporal spread within single records, averaged
    over the ensemble, the time-fluctuation reference scale.
    """
    delta_e = float(spectrum.energies[-1] - spectrum.energies[0])
    sigma_t = stats.energy_std
    ratio = sigma_t / delta_e
    mean_ratio = float(ratio[1:].mean()) if len(ratio) > 1 else 0.0
    j0 = max(1, int(len(stats.times) * (1 - tail_fraction)))
    tail = stats.energies[j0:]
    delta_e_inf = float(np.mean(tail.std(axis=0, ddof=1))) if len(tail) > 2 else np.nan
    return {"delta_e": delta_e, "sigma_e_series": sigma_t,
            "ratio_series": ratio, "mean_ratio": mean_ratio,
            "delta_e_inf": delta_e_inf,
            "energy_mean_series": stats.energy_mean}
