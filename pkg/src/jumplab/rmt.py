"""Random-matrix predictions for overlap statistics and measurement chains.

Mid-spectrum eigenstates of H0 + V are modelled as constrained Gaussian
vectors: independent N(0, Lambda(mu, alpha)) components conditioned on
mutual orthogonality, with the Lorentzian envelope

    Lambda(mu, alpha) = (omega0 Gamma / pi) / ((E_mu - E_alpha)^2 + Gamma^2).

From this follow closed forms used across the package: microcanonical
(Lorentzian-weighted) averages, the stationary outcome distribution
p_inf, the one-step transition kernel for repeated projective
measurements

    p(s_f | s_i; dt) = (delta_{s_f s_i} - p_inf(s_f)) e^{-2 Gamma dt} + p_inf(s_f),

the monotonically growing Gibbs entropy of the evolving outcome
distribution, and the four-point corrections induced by orthogonality
(negative, suppressed by 1/sum_gamma Lambda Lambda).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Iterable, Sequence

import numpy as np

from .models import Observable


# ---------------------------------------------------------------------------
# envelope and microcanonical weights


@dataclass
class LorentzianEnvelope:
    gamma: float
    omega0: float
    center: float = 0.0

    def __call__(self, energy) -> np.ndarray:
        de = np.asarray(energy, dtype=float) - self.center
        return (self.omega0 * self.gamma / np.pi) / (de * de + self.gamma ** 2)


@dataclass
class MicrocanonicalWeights:
    """Normalized Lorentzian weights over the free spectrum."""

    weights: np.ndarray
    e_center: float
    gamma: float

    def average(self, diagonal_values: np.ndarray) -> float:
        return float(self.weights @ np.asarray(diagonal_values, dtype=float))


def microcanonical_weights(free_energies: np.ndarray, e_center: float,
                           gamma: float) -> MicrocanonicalWeights:
    """Lorentzian weights centred at e_center, normalized to sum 1."""
    if gamma <= 0:
        raise ValueError("gamma must be positive")
    e = np.asarray(free_energies, dtype=float)
    raw = 1.0 / ((e - e_center) ** 2 + gamma ** 2)
    total = raw.sum()
    if total <= 0:
        raise ValueError("weights vanished; centre far outside the spectrum?")
    return MicrocanonicalWeights(weights=raw / total, e_center=float(e_center),
                                 gamma=float(gamma))


def microcanonical_average(weights: MicrocanonicalWeights,
                           diagonal_values: np.ndarray) -> float:
    return weights.average(diagonal_values)


def outcome_weight_matrix(observable: Observable) -> np.ndarray:
    """W[s, alpha] = <phi_alpha| P_s |phi_alpha> for every outcome s."""
    b = observable.basis.vectors()
    b2 = b * b
    k = observable.n_outcomes
    w = np.empty((k, b.shape[1]))
    for s in range(k):
        w[s] = b2[observable.labels_natural == s, :].sum(axis=0)
    return w


def stationary_distribution(observable: Observable,
                            weights: MicrocanonicalWeights) -> np.ndarray:
    """p_inf(s): Lorentzian-weighted projector averages (sums to 1 exactly)."""
    w = outcome_weight_matrix(observable) @ weights.weights
    return w / w.sum()


# ---------------------------------------------------------------------------
# measurement chain


@dataclass
class MarkovKernel:
    """Transition matrix family K(dt)[i, f] for the outcome chain."""

    p_inf: np.ndarray
    gamma: float
    outcomes: np.ndarray | None = None

    def __post_init__(self):
        p = np.asarray(self.p_inf, dtype=float)
        if np.any(p < -1e-15) or abs(p.sum() - 1.0) > 1e-9:
            raise ValueError("p_inf must be a probability vector")
        if self.gamma <= 0:
            raise ValueError("gamma must be positive")
        self.p_inf = np.clip(p, 0.0, None)

    def matrix(self, dt: float) -> np.ndarray:
        """Rows: initial outcome; columns: final outcome after a lag dt."""
        if dt < 0:
            raise ValueError("dt must be non-negative")
        decay = np.exp(-2 * self.gamma * dt)
        k = len(self.p_inf)
        return decay * np.eye(k) + (1 - decay) * np.tile(self.p_inf, (k, 1))

    def mean_value(self, s0_index: int, times: np.ndarray) -> np.ndarray:
        """E[s(t)] for a chain started in outcome s0 (needs outcome values)."""
        if self.outcomes is None:
            raise ValueError("outcome values not attached")
        o_inf = float(self.p_inf @ self.outcomes)
        o0 = float(self.outcomes[s0_index])
        return (o0 - o_inf) * np.exp(-2 * self.gamma * np.asarray(times)) + o_inf


def markov_kernel(p_inf: np.ndarray, gamma: float,
                  outcomes: np.ndarray | None = None) -> MarkovKernel:
    return MarkovKernel(p_inf=np.asarray(p_inf, dtype=float), gamma=gamma,
                        outcomes=None if outcomes is None else np.asarray(outcomes, dtype=float))


def chapman_kolmogorov_check(kernel: MarkovKernel, n_draws: int = 100,
                             seed: int = 0, t_scale: float | None = None) -> dict[str, Any]:
    """Exact composition property: K(t1) K(t2) = K(t1 + t2).

    Random positive lags are drawn on the scale of the relaxation time
    unless `t_scale` is given.  Returns the maximum absolute deviation.
    """
    rng = np.random.default_rng(seed)
    scale = t_scale if t_scale is not None else 1.0 / (2 * kernel.gamma)
    worst = 0.0
    for _ in range(n_draws):
        t1, t2 = rng.uniform(0.0, 3 * scale, size=2)
        err = np.max(np.abs(kernel.matrix(t1) @ kernel.matrix(t2)
                            - kernel.matrix(t1 + t2)))
        worst = max(worst, float(err))
    return {"max_error": worst, "n_draws": n_draws}


def gibbs_entropy(p: np.ndarray) -> float:
    """-sum p ln p with the 0 ln 0 = 0 convention."""
    q = np.asarray(p, dtype=float)
    if np.any(q < -1e-12):
        raise ValueError("probabilities must be non-negative")
    q = np.clip(q, 0.0, None)
    nz = q[q > 0]
    return float(-(nz * np.log(nz)).sum())


def predicted_entropy_curve(p0: np.ndarray, kernel: MarkovKernel,
                            times: Sequence[float]) -> dict[str, Any]:
    """Gibbs entropy of p(t) = p0 e^{-2 Gamma t} + (1 - e^{-2 Gamma t}) p_inf."""
    t = np.asarray(times, dtype=float)
    decay = np.exp(-2 * kernel.gamma * t)[:, None]
    p_t = decay * np.asarray(p0, dtype=float)[None, :] + (1 - decay) * kernel.p_inf[None, :]
    s = np.array([gibbs_entropy(row) for row in p_t])
    diffs = np.diff(s)
    return {"times": t, "entropy": s, "p_t": p_t,
            "monotone": bool(np.all(diffs >= -1e-12)),
            "min_step": float(diffs.min()) if len(diffs) else 0.0}


# ---------------------------------------------------------------------------
# thermodynamics of the stationary distribution


@dataclass
class SystemDistribution:
    """Stationary outcome distribution with its thermodynamic summary."""

    outcomes: np.ndarray          # measured values s
    sys_energies: np.ndarray      # eps_s for each outcome
    p: np.ndarray
    e_center: float
    beta: float
    mass: float                   # dispersion coefficient in eps_s = m s^2 / 2
    quadratic_dispersion: bool
    beta_window: tuple[float, float]


def fit_dispersion_mass(outcomes: np.ndarray, sys_energies: np.ndarray) -> tuple[float, bool]:
    """Least-squares m in eps_s = m s^2 / 2; flags a non-quadratic ladder."""
    s2 = np.asarray(outcomes, dtype=float) ** 2
    eps = np.asarray(sys_energies, dtype=float)
    denom = (s2 * s2).sum()
    if denom <= 0:
        return np.nan, False
    m = 2.0 * (s2 * eps).sum() / denom
    resid = np.abs(eps - 0.5 * m * s2).max()
    scale = max(np.abs(eps).max(), 1e-12)
    return float(m), bool(resid <= 1e-9 * scale)


def bath_log_slope(bath_dos, e_center: float, window: float,
                   n_points: int = 41) -> float:
    """Windowed linear fit of ln D_B around e_center (inverse temperature)."""
    pts = np.linspace(e_center - window / 2, e_center + window / 2, n_points)
    vals = bath_dos.evaluate(pts)
    good = vals > vals.max() * 1e-12
    if good.sum() < 3:
        raise ValueError("bath density too sparse inside the beta window")
    slope = np.polyfit(pts[good], np.log(vals[good]), 1)[0]
    return float(slope)


def system_distribution(bath_dos, outcomes: np.ndarray, sys_energies: np.ndarray,
                        e_center: float, *, gamma: float,
                        beta_window: float | None = None) -> SystemDistribution:
    """p(s) proportional to D_B(E0 - eps_s), with local inverse temperature.

    The beta window defaults to max(4 Gamma, 10 mean bath spacings);
    override it when the bath spectrum is strongly clustered.
    """
    eps = np.asarray(sys_energies, dtype=float)
    vals = np.asarray(bath_dos.evaluate(e_center - eps), dtype=float)
    total = vals.sum()
    if not np.isfinite(total) or total <= len(eps) * 1e-15:
        raise ValueError("bath density vanished at every shifted energy; "
                         "e_center is outside the usable range")
    p = vals / total
    spacing = float(np.mean(np.diff(np.sort(bath_dos.levels))))
    window = beta_window if beta_window is not None else max(4 * gamma, 10 * spacing)
    beta = bath_log_slope(bath_dos, e_center, window)
    m, quad = fit_dispersion_mass(outcomes, eps)
    return SystemDistribution(outcomes=np.asarray(outcomes, dtype=float),
                              sys_energies=eps, p=p, e_center=float(e_center),
                              beta=beta, mass=m, quadratic_dispersion=quad,
                              beta_window=(e_center - window / 2, e_center + window / 2))


def einstein_check(dist: SystemDistribution) -> dict[str, Any]:
    """Compare Var_p(s) with 1/(m beta) for a quadratic dispersion.

    The relation holds in the regime 1 << m*beta*S^2-ish << d_s; the
    report carries the regime numbers but only flags structural failures
    (non-positive beta, non-quadratic ladder).
    """
    s = dist.outcomes
    var = float(dist.p @ s ** 2 - (dist.p @ s) ** 2)
    flags = []
    if not dist.quadratic_dispersion:
        flags.append("dispersion_not_quadratic")
    if dist.beta <= 0:
        flags.append("beta_nonpositive")
        predicted = np.inf
        deviation = np.inf
    else:
        predicted = 1.0 / (dist.mass * dist.beta)
        deviation = abs(var * dist.mass * dist.beta - 1.0)
    return {"variance": var, "predicted": predicted, "deviation": deviation,
            "beta": dist.beta, "mass": dist.mass,
            "m_beta": dist.mass * dist.beta, "d_sys": len(s),
            "e_center": dist.e_center, "flags": flags}


# ---------------------------------------------------------------------------
# constrained Gaussian ensemble


def lorentzian_envelope_matrix(n_states: int, n_grid: int, gamma: float,
                               omega0: float = 1.0) -> np.ndarray:
    """Envelope Lambda[mu, alpha] on a uniform unit-spacing grid.

    Row mu is centred at grid position mu + (n_grid - n_states)/2 so a
    square matrix has the usual banded structure.
    """
    if n_states > n_grid:
        raise ValueError("more states than grid points")
    offset = (n_grid - n_states) / 2
    mu = (np.arange(n_states) + offset) * omega0
    alpha = np.arange(n_grid) * omega0
    de = mu[:, None] - alpha[None, :]
    return (omega0 * gamma / np.pi) / (de * de + gamma * gamma)


class ChaoticEnsembleSampler:
    """Draws orthonormal coefficient matrices with a prescribed envelope.

    Members are independent Gaussian draws G[mu, alpha] ~ N(0, Lambda)
    made mutually orthogonal by the symmetric (Loewdin) transformation
    C = (G G^T)^{-1/2} G, which is order-independent and perturbs the
    draw as little as possible.  Each member has its own seed stream, so
    results do not depend on batching.
    """

    def __init__(self, lam: np.ndarray, seed: int = 0):
        lam = np.asarray(lam, dtype=float)
        if np.any(lam <= 0):
            raise ValueError("envelope entries must be positive")
        self.lam = lam
        self.sqrt_lam = np.sqrt(lam)
        self.seed = seed

    def member(self, index: int) -> np.ndarray:
        rng = np.random.default_rng(np.random.SeedSequence((self.seed, index)))
        g = rng.standard_normal(self.lam.shape) * self.sqrt_lam
        s = g @ g.T
        vals, vecs = np.linalg.eigh(s)
        if vals.min() <= 0:
            raise np.linalg.LinAlgError("Gram matrix not positive definite")
        inv_sqrt = (vecs / np.sqrt(vals)[None, :]) @ vecs.T
        return inv_sqrt @ g

    def batches(self, n_members: int, batch: int = 64) -> Iterable[np.ndarray]:
        for start in range(0, n_members, batch):
            size = min(batch, n_members - start)
            out = np.empty((size,) + self.lam.shape)
            for i in range(size):
                out[i] = self.member(start + i)
            yield out

    def collect(self, n_members: int) -> np.ndarray:
        if n_members * self.lam.size * 8 > 2e9:
            raise MemoryError("requested ensemble exceeds 2 GB; use batches()")
        return np.concatenate(list(self.batches(n_members)), axis=0)


def sample_chaotic_ensemble(lam: np.ndarray, n_members: int,
                            seed: int = 0) -> np.ndarray:
    """Convenience wrapper returning the full member array."""
    return ChaoticEnsembleSampler(lam, seed=seed).collect(n_members)


def mean_square_profile(sampler: ChaoticEnsembleSampler, n_members: int,
                        batch: int = 64) -> np.ndarray:
    """Streamed mean of c^2 over members (same shape as the envelope)."""
    acc = np.zeros_like(sampler.lam)
    done = 0
    for chunk in sampler.batches(n_members, batch):
        acc += (chunk * chunk).sum(axis=0)
        done += chunk.shape[0]
    return acc / done


def offset_binned_variance(mean_c2: np.ndarray, rows: Sequence[int],
                           max_offset: int) -> dict[str, np.ndarray]:
    """Average mean_c2 over `rows` at fixed column offset alpha - mu_centre."""
    n_states, n_grid = mean_c2.shape
    shift = (n_grid - n_states) // 2
    offsets = np.arange(-max_offset, max_offset + 1)
    out = np.zeros(len(offsets))
    counts = np.zeros(len(offsets), dtype=int)
    for r in rows:
        centre = r + shift
        for k, off in enumerate(offsets):
            col = centre + off
            if 0 <= col < n_grid:
                out[k] += mean_c2[r, col]
                counts[k] += 1
    if np.any(counts == 0):
        raise ValueError("offset range leaves the grid for some rows")
    return {"offsets": offsets, "mean": out / counts, "rows": np.asarray(rows)}


def four_point_prediction(lam: np.ndarray, mu: int, nu: int, a: int, b: int,
                          a2: int, b2: int) -> float:
    """<c_mu(a) c_nu(b) c_mu(a2) c_nu(b2)> for the constrained ensemble.

    For mu != nu the first (Wick) term is cut down by the orthogonality
    correction; for mu == nu plain Wick pairing applies.  The envelope is
    taken row-normalized, matching sampled members whose rows have unit
    norm on the finite grid.
    """
    lam = lam / lam.sum(axis=1, keepdims=True)
    if mu == nu:
        return float(lam[mu, a] * lam[mu, a2] * (a == b) * (a2 == b2)
                     + lam[mu, a] * lam[mu, b] * (a == a2) * (b == b2)
                     + lam[mu, a] * lam[mu, b] * (a == b2) * (b == a2))
    direct = lam[mu, a] * lam[nu, b] * (a == a2) * (b == b2)
    overlap = float((lam[mu] * lam[nu]).sum())
    corr = (lam[mu, a] * lam[nu, b] * lam[mu, a2] * lam[nu, b2] / overlap
            * ((a == b) * (a2 == b2) + (a == b2) * (b == a2)))
    return float(direct - corr)


def _four_point_rows(lam, tuples, sums, sq, done) -> list[dict[str, Any]]:
    rows = []
    for k, tup in enumerate(tuples):
        mean = sums[k] / done
        var = max(sq[k] / done - mean ** 2, 0.0)
        se = np.sqrt(var / done)
        pred = four_point_prediction(lam, *tup)
        z = (mean - pred) / se if se > 0 else np.inf
        rows.append({"indices": tup, "empirical": float(mean), "se": float(se),
                     "predicted": float(pred), "z": float(z)})
    return rows


def four_point_check(sampler: ChaoticEnsembleSampler, n_members: int,
                     tuples: Sequence[tuple[int, int, int, int, int, int]],
                     batch: int = 64) -> list[dict[str, Any]]:
    """Empirical four-point averages against the ensemble prediction.

    Each tuple is (mu, nu, alpha, beta, alpha', beta'); the report rows
    carry the Monte-Carlo mean, its standard error and the z-score
    against the closed-form prediction.
    """
    if n_members < 2:
        raise ValueError("need at least two members")
    sums = np.zeros(len(tuples))
    sq = np.zeros(len(tuples))
    done = 0
    for chunk in sampler.batches(n_members, batch):
        for k, (mu, nu, a, b, a2, b2) in enumerate(tuples):
            prod = (chunk[:, mu, a] * chunk[:, nu, b]
                    * chunk[:, mu, a2] * chunk[:, nu, b2])
            sums[k] += prod.sum()
            sq[k] += (prod * prod).sum()
        done += chunk.shape[0]
    return _four_point_rows(sampler.lam, tuples, sums, sq, done)


def ensemble_statistics(sampler: ChaoticEnsembleSampler, n_members: int,
                        tuples: Sequence[tuple[int, int, int, int, int, int]],
                        batch: int = 64):
    """Mean-square profile and four-point averages from one streamed pass.

    Drawing members dominates the cost (one dense eigensolve each), so
    large-ensemble runs should accumulate every statistic per draw rather
    than re-streaming.  Returns (mean_c2, four_point_rows) identical to
    mean_square_profile + four_point_check on the same seed.
    """
    if n_members < 2:
        raise ValueError("need at least two members")
    acc = np.zeros_like(sampler.lam)
    sums = np.zeros(len(tuples))
    sq = np.zeros(len(tuples))
    done = 0
    for chunk in sampler.batches(n_members, batch):
        acc += (chunk * chunk).sum(axis=0)
        for k, (mu, nu, a, b, a2, b2) in enumerate(tuples):
            prod = (chunk[:, mu, a] * chunk[:, nu, b]
                    * chunk[:, mu, a2] * chunk[:, nu, b2])
            sums[k] += prod.sum()
            sq[k] += (prod * prod).sum()
        done += chunk.shape[0]
    return acc / done, _four_point_rows(sampler.lam, tuples, sums, sq, done)


class RandomHamiltonianEnsemble:
    """Eigenvector ensemble of a uniform level ladder plus a GOE coupling.

    Each member is eigh(H0 + V) with (H0)_aa = a*omega0 and V symmetric
    Gaussian, off-diagonal variance Gamma*omega0/pi (doubled on the
    diagonal) so the golden-rule half-width of the local density of
    states equals the requested Gamma.  Rows of the returned coefficient
    matrix are exactly orthonormal, and per-member seed streams keep the
    draw independent of batching.

    Direct orthogonalization of envelope-weighted Gaussians (see
    ChaoticEnsembleSampler) distorts the variance profile once rows
    overlap strongly; at Gamma >> omega0 each row shares weight with
    ~2*pi*Gamma/omega0 neighbours and the distortion reaches tens of
    percent, so wide envelopes should use this ensemble instead.
    """

    def __init__(self, n_states: int, gamma: float, omega0: float = 1.0,
                 seed: int = 0):
        if n_states < 2:
            raise ValueError("need at least two states")
        if gamma <= 0 or omega0 <= 0:
            raise ValueError("gamma and omega0 must be positive")
        self.n_states = int(n_states)
        self.gamma = float(gamma)
        self.omega0 = float(omega0)
        self.seed = seed
        self.coupling_variance = self.gamma * self.omega0 / np.pi
        self.h0_energies = np.arange(self.n_states) * self.omega0

    def member(self, index: int) -> tuple[np.ndarray, np.ndarray]:
        """One draw: (eigenvalues, coefficient rows in the ladder basis)."""
        rng = np.random.default_rng(np.random.SeedSequence((self.seed, index)))
        a = rng.standard_normal((self.n_states, self.n_states))
        h = (a + a.T) * np.sqrt(self.coupling_variance / 2.0)
        h[np.diag_indices(self.n_states)] += self.h0_energies
        vals, vecs = np.linalg.eigh(h)
        return vals, vecs.T


def _pair_four_point(lam_mu: np.ndarray, lam_nu: np.ndarray, a: int, b: int,
                     a2: int, b2: int, same_row: bool) -> float:
    """Four-point prediction from two row-normalized envelope rows."""
    if same_row:
        return float(lam_mu[a] * lam_mu[a2] * (a == b) * (a2 == b2)
                     + lam_mu[a] * lam_mu[b] * ((a == a2) * (b == b2)
                                                + (a == b2) * (b == a2)))
    direct = lam_mu[a] * lam_nu[b] * (a == a2) * (b == b2)
    overlap = float(lam_mu @ lam_nu)
    corr = (lam_mu[a] * lam_nu[b] * lam_mu[a2] * lam_nu[b2] / overlap
            * ((a == b) * (a2 == b2) + (a == b2) * (b == a2)))
    return float(direct - corr)


def ensemble_envelope_report(ensemble: RandomHamiltonianEnsemble,
                             n_members: int,
                             tuples: Sequence[tuple[int, int, int, int, int, int]],
                             *, row_halfwidth: int = 20,
                             window_gammas: float = 3.0) -> dict[str, Any]:
    """Binned c^2 profile and four-point averages in one streamed pass.

    The profile bins coefficients of the central rows by the actual
    energy distance E_mu - E_alpha and compares against the Lorentzian
    envelope whose prefactor uses the realized mean level spacing (the
    coupling widens the spectrum slightly, so the density of states
    entering the envelope normalization is the perturbed one, not the
    bare ladder spacing).  Four-point predictions are evaluated per
    member from that member's eigenvalues and averaged.
    """
    if n_members < 2:
        raise ValueError("need at least two members")
    n = ensemble.n_states
    gamma, omega0 = ensemble.gamma, ensemble.omega0
    centre = n // 2
    rows = np.arange(centre - row_halfwidth, centre + row_halfwidth + 1)
    if rows[0] < 0 or rows[-1] >= n:
        raise ValueError("analysis rows leave the spectrum")
    n_half = int(round(window_gammas * gamma / omega0))
    edges = (np.arange(2 * n_half + 2) - (n_half + 0.5)) * omega0
    if rows[0] * omega0 - edges[-1] < ensemble.h0_energies[0] - 1e-9:
        raise ValueError("energy window leaves the ladder for edge rows")

    pred_rows = sorted({m for t in tuples for m in t[:2]})
    wsum = np.zeros(2 * n_half + 1)
    wcount = np.zeros(2 * n_half + 1)
    sums = np.zeros(len(tuples))
    sqs = np.zeros(len(tuples))
    pred_sums = np.zeros(len(tuples))
    spacing_sum = 0.0
    for index in range(n_members):
        vals, coeffs = ensemble.member(index)
        de = vals[rows, None] - ensemble.h0_energies[None, :]
        k = np.searchsorted(edges, de.ravel()) - 1
        ok = (k >= 0) & (k < wsum.size)
        np.add.at(wsum, k[ok], (coeffs[rows] ** 2).ravel()[ok])
        np.add.at(wcount, k[ok], 1.0)
        spacing_sum += float(np.mean(np.diff(vals[rows[0]:rows[-1] + 1])))
        lam = {}
        for m in pred_rows:
            raw = LorentzianEnvelope(gamma, omega0, center=vals[m])(
                ensemble.h0_energies)
            lam[m] = raw / raw.sum()
        for t, (mu, nu, a, b, a2, b2) in enumerate(tuples):
            prod = (coeffs[mu, a] * coeffs[nu, b]
                    * coeffs[mu, a2] * coeffs[nu, b2])
            sums[t] += prod
            sqs[t] += prod * prod
            pred_sums[t] += _pair_four_point(lam[mu], lam[nu], a, b, a2, b2,
                                             mu == nu)

    omega_eff = spacing_sum / n_members
    centers = 0.5 * (edges[:-1] + edges[1:])
    empirical = wsum / np.maximum(wcount, 1.0)
    predicted = LorentzianEnvelope(gamma, omega_eff)(centers)
    four = []
    for t, tup in enumerate(tuples):
        mean = sums[t] / n_members
        var = max(sqs[t] / n_members - mean ** 2, 0.0)
        se = np.sqrt(var / n_members)
        pred = pred_sums[t] / n_members
        z = (mean - pred) / se if se > 0 else np.inf
        four.append({"indices": tup, "empirical": float(mean),
                     "se": float(se), "predicted": float(pred),
                     "z": float(z)})
    return {"bin_centers": centers, "empirical": empirical,
            "predicted": predicted, "counts": wcount,
            "profile_max_rel_error": float(np.abs(empirical / predicted - 1.0).max()),
            "omega0_eff": float(omega_eff), "four_point": four,
            "n_members": int(n_members)}
