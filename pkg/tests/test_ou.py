"""Overdamped trap process: integrator accuracy and the shaken-trap spread."""

import numpy as np
import pytest

from jumplab.ou import (OuParams, ou_variance_curve, quantum_to_ou,
                        simulate_ou, simulate_ou_exact, simulate_shaken_ou)

BASE = dict(k=1.0, gamma_friction=1.0, diffusion=0.5, dt_step=0.01)


def test_params_validation():
    with pytest.raises(ValueError):
        OuParams(k=-1.0)
    with pytest.raises(ValueError):
        OuParams(diffusion=0.0)
    with pytest.raises(ValueError):
        OuParams(t_final=0.005, dt_step=0.01)
    p = OuParams(**BASE, t_final=10.0)
    assert p.theta == 1.0
    assert p.stationary_variance == 0.5


def test_stability_guard():
    coarse = OuParams(k=1.0, gamma_friction=1.0, dt_step=0.2, t_final=10.0)
    with pytest.raises(ValueError):
        simulate_ou(coarse, 10, 0)


def test_variance_curve_matches_closed_form():
    p = OuParams(**BASE, x0=0.8, t_final=4.0)
    out = simulate_ou(p, 20000, 31)
    m = out["times"] > 0
    rel = np.abs(out["var"][m] / ou_variance_curve(p, out["times"][m]) - 1.0)
    assert rel.max() < 0.05          # measured 0.031

    exact = simulate_ou_exact(p, 20000, 31)
    rel_x = np.abs(exact["var"][m] / ou_variance_curve(p, exact["times"][m]) - 1.0)
    assert rel_x.max() < 0.05        # measured 0.025


def test_mean_decay_small_noise():
    p = OuParams(k=1.0, gamma_friction=1.0, diffusion=1e-8, x0=1.0,
                 dt_step=0.01, t_final=2.0)
    out = simulate_ou(p, 50, 0)
    j = np.arange(out["n_steps"] + 1)
    np.testing.assert_allclose(out["mean"], (1 - 0.01) ** j, atol=2e-4)
    exact = simulate_ou_exact(p, 50, 0)
    np.testing.assert_allclose(exact["mean"], np.exp(-exact["times"]),
                               atol=2e-4)


def test_stationary_variance_reached():
    p = OuParams(**BASE, x0=0.0, t_final=12.0)
    out = simulate_ou(p, 10000, 7)
    tail = out["var"][out["times"] >= 6.0]
    se = p.stationary_variance * np.sqrt(2.0 / (10000 - 1))
    z = (tail.mean() - p.stationary_variance) / se
    assert abs(z) < 3.0              # measured -0.03


def test_paths_independent_of_batch_size():
    p = OuParams(k=1.0, gamma_friction=1.0, diffusion=1e-8, x0=1.0,
                 dt_step=0.01, t_final=2.0)
    a = simulate_ou(p, 3, 4)
    b = simulate_ou(p, 5, 4)
    np.testing.assert_array_equal(a["path_means"], b["path_means"][:3])


def test_shaken_trap_spread():
    p = OuParams(**BASE, x0=0.0, t_final=210.0)
    out = simulate_shaken_ou(p, 0.5, 3000, 13)
    assert out["predicted_delta2"] == pytest.approx(0.25)
    assert abs(out["delta2"] / out["predicted_delta2"] - 1.0) < 0.10  # 0.014
    assert out["average_from"] == pytest.approx(10.0)


def test_shaken_trap_zero_drift_floor():
    # without drift disorder the spread of time averages is the finite-horizon
    # floor 2 sigma^2 tau / T, far below the shaken prediction at these params
    p = OuParams(**BASE, x0=0.0, t_final=210.0)
    out = simulate_shaken_ou(p, 0.0, 3000, 13)
    assert np.all(out["drifts"] == 0.0)
    assert 0.0 <= out["delta2"] < 0.01            # measured 0.0049


def test_shaken_validation():
    p = OuParams(**BASE, x0=0.0, t_final=210.0)
    with pytest.raises(ValueError):
        simulate_shaken_ou(p, -0.1, 10, 0)
    with pytest.raises(ValueError):
        simulate_shaken_ou(p, 0.1, 10, 0, transient=300.0)


def test_quantum_to_ou_mapping():
    out = quantum_to_ou(sigma2=2.0, gamma=0.4, dos=80.0, gamma_friction=1.5)
    assert out["predicted_delta2"] == pytest.approx(out["quantum_delta2"])
    assert out["k"] == pytest.approx(0.4 * 1.5)
    with pytest.raises(ValueError):
        quantum_to_ou(sigma2=-1.0, gamma=0.4, dos=80.0, gamma_friction=1.5)
