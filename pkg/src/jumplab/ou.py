"""Overdamped Ornstein-Uhlenbeck reference process.

The classical side of the fluctuation relations: a particle in a
harmonic trap obeying

    dx = -(k/gamma) x dt + sqrt(2 D) dW,

whose stationary variance D*gamma/k expresses the Einstein relation
(D = T/gamma gives sigma_x^2 = T/k), and the "shaken trap" variant in
which each realization carries a constant random drift v, producing a
spread of per-path time averages with variance v_std^2 gamma^2 / k^2 --
the classical analogue of time-fluctuations surviving the long-time
limit.

Euler-Maruyama is the production integrator for transparency; the exact
OU transition sampler lives alongside it as the oracle.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any

import numpy as np

__all__ = ["OuParams", "simulate_ou", "simulate_ou_exact",
           "simulate_shaken_ou", "ou_variance_curve", "quantum_to_ou"]


@dataclass
class OuParams:
    k: float = 1.0
    gamma_friction: float = 1.0
    diffusion: float = 0.5
    x0: float = 0.0
    dt_step: float = 0.01
    t_final: float = 20.0

    def __post_init__(self):
        for name in ("k", "gamma_friction", "diffusion", "dt_step"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.t_final <= self.dt_step:
            raise ValueError("t_final must exceed dt_step")

    @property
    def theta(self) -> float:
        """Relaxation rate k/gamma."""
        return self.k / self.gamma_friction

    @property
    def stationary_variance(self) -> float:
        return self.diffusion * self.gamma_friction / self.k

    def check_stability(self):
        limit = self.gamma_friction / (5 * self.k)
        if self.dt_step >= limit:
            raise ValueError(
                f"dt_step {self.dt_step} too coarse for k/gamma = {self.theta}:"
                f" need dt < {limit}")


def _path_noise(base_seed, indices, n_steps: int) -> np.ndarray:
    """(n_steps, len(indices)) standard normals, one stream per path."""
    out = np.empty((n_steps, len(indices)))
    for col, idx in enumerate(indices):
        key = (tuple(base_seed) if isinstance(base_seed, (tuple, list))
               else (int(base_seed),)) + (int(idx),)
        rng = np.random.default_rng(np.random.SeedSequence(key))
        out[:, col] = rng.standard_normal(n_steps)
    return out


def ou_variance_curve(params: OuParams, times: np.ndarray) -> np.ndarray:
    """Closed form var(t) = (D gamma / k)(1 - exp(-2 k t / gamma)) for x0 fixed."""
    t = np.asarray(times, dtype=float)
    return params.stationary_variance * (1 - np.exp(-2 * params.theta * t))


def _run(params: OuParams, n_paths: int, seed, *, exact: bool,
         drifts: np.ndarray | None = None, chunk: int = 2000,
         average_from: float = 0.0) -> dict[str, Any]:
    params.check_stability()
    dt = params.dt_step
    n_steps = int(round(params.t_final / dt))
    times = np.arange(n_steps + 1) * dt
    theta = params.theta

    if exact:
        decay = np.exp(-theta * dt)
        kick = np.sqrt(params.stationary_variance * (1 - decay ** 2))
    else:
        decay = 1.0 - theta * dt
        kick = np.sqrt(2 * params.diffusion * dt)

    j_avg = int(np.ceil(average_from / dt))
    sum_x = np.zeros(n_steps + 1)
    sum_x2 = np.zeros(n_steps + 1)
    path_means = np.empty(n_paths)

    for start in range(0, n_paths, chunk):
        idx = np.arange(start, min(start + chunk, n_paths))
        noise = _path_noise(seed, idx, n_steps)
        x = np.full(len(idx), float(params.x0))
        acc = x.copy() if j_avg == 0 else np.zeros(len(idx))
        sum_x[0] += x.sum()
        sum_x2[0] += (x * x).sum()
        v = drifts[idx] if drifts is not None else None
        for j in range(n_steps):
            x = x * decay + kick * noise[j]
            if v is not None:
                # constant drift shifts the stationary point by v*gamma/k
                x += v * dt if not exact else v * (1 - decay) / theta
            sum_x[j + 1] += x.sum()
            sum_x2[j + 1] += (x * x).sum()
            if j + 1 >= j_avg:
                acc += x
        path_means[idx] = acc / (n_steps + 1 - j_avg)

    mean = sum_x / n_paths
    var = sum_x2 / n_paths - mean ** 2
    return {"times": times, "mean": mean, "var": var, "path_means": path_means,
            "n_steps": n_steps, "average_from": j_avg * dt}


def simulate_ou(params: OuParams, n_paths: int, seed) -> dict[str, Any]:
    """Euler-Maruyama ensemble; returns mean(t), var(t) and path time-averages."""
    return _run(params, n_paths, seed, exact=False)


def simulate_ou_exact(params: OuParams, n_paths: int, seed) -> dict[str, Any]:
    """Exact OU transition sampling on the same time grid (integrator oracle)."""
    return _run(params, n_paths, seed, exact=True)


def simulate_shaken_ou(params: OuParams, v_std: float, n_paths: int, seed,
                       *, transient: float | None = None) -> dict[str, Any]:
    """Random-drift variant: one constant v ~ N(0, v_std^2) per realization.

    Returns the variance of per-path time-averaged positions (computed
    after the transient, default ten relaxation times) next to the
    closed-form prediction v_std^2 gamma^2 / k^2.
    """
    if v_std < 0:
        raise ValueError("v_std must be non-negative")
    drift_key = ((tuple(seed) if isinstance(seed, (tuple, list)) else (int(seed),))
                 + (0x7a11,))  # dedicated stream, disjoint from path noise
    rng = np.random.default_rng(np.random.SeedSequence(drift_key))
    drifts = rng.normal(0.0, v_std, size=n_paths)
    skip = transient if transient is not None else 10.0 / params.theta
    if skip >= params.t_final:
        raise ValueError("horizon shorter than the transient cut")
    out = _run(params, n_paths, seed, exact=False, drifts=drifts,
               average_from=skip)
    centred = out["path_means"] - out["path_means"].mean()
    delta2 = float((centred * centred).sum() / (n_paths - 1))
    out.update({"drifts": drifts, "delta2": delta2,
                "predicted_delta2": v_std ** 2 * (params.gamma_friction / params.k) ** 2,
                "v_std": v_std})
    return out


def quantum_to_ou(sigma2: float, gamma: float, dos: float,
                  gamma_friction: float = 1.0) -> dict[str, float]:
    """Map equilibrium-fluctuation numbers onto shaken-trap parameters.

    Identifying the relaxation rates (k/gamma_friction = Gamma) and
    substituting v^2 -> sigma^2 Gamma / (4 pi D(E)) turns the classical
    spread of time averages, v^2 gamma^2/k^2, into sigma^2/(4 pi D Gamma)
    -- the quantum time-fluctuation.
    """
    if min(sigma2, gamma, dos, gamma_friction) <= 0:
        raise ValueError("all mapping inputs must be positive")
    k = gamma * gamma_friction
    v2 = sigma2 * gamma / (4 * np.pi * dos)
    predicted = v2 * (gamma_friction / k) ** 2
    return {"k": k, "gamma_friction": gamma_friction, "v_std": float(np.sqrt(v2)),
            "predicted_delta2": float(predicted),
            "quantum_delta2": sigma2 / (4 * np.pi * dos * gamma)}
