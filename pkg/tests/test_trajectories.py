"""Measured-trajectory engine: determinism, aggregation, chain statistics."""

import numpy as np
import pytest

from jumplab.dynamics import fit_decay
from jumplab.models import build_blbq_chain, build_observable, build_oscillator_chain
from jumplab.rmt import gibbs_entropy, markov_kernel
from jumplab.spectral import diagonalize
from jumplab.trajectories import (MeasurementEngine, consistent_histories_check,
                                  count_transitions, energy_drift_report,
                                  ensemble_run, free_state_vector,
                                  run_trajectory, simulate_kernel_chain,
                                  single_trajectory_entropy,
                                  transition_z_scores)


@pytest.fixture(scope="module")
def small():
    pair = build_oscillator_chain(2, 1, h_x=0.5, j=0.35)
    spectrum = diagonalize(pair)
    obs = build_observable(pair, "position_site_1")
    psi0 = free_state_vector(spectrum.basis, pair.dim // 2)
    return spectrum, obs, psi0


@pytest.fixture(scope="module")
def small_stats(small):
    spectrum, obs, psi0 = small
    return ensemble_run(spectrum, obs, psi0, dt=0.7, n_meas=12, n_real=16,
                        base_seed=3)


def test_trajectory_deterministic(small):
    spectrum, obs, psi0 = small
    a = run_trajectory(spectrum, psi0, obs, 0.7, 10, 5)
    b = run_trajectory(spectrum, psi0, obs, 0.7, 10, 5)
    np.testing.assert_array_equal(a.labels, b.labels)
    np.testing.assert_array_equal(a.energies, b.energies)
    np.testing.assert_array_equal(a.outcomes, obs.outcomes[a.labels])
    assert a.labels.shape == (11,)


def test_batch_matches_single_runs(small):
    spectrum, obs, psi0 = small
    engine = MeasurementEngine(spectrum, obs)
    labels, energies = engine.run_batch(psi0, 0.7, 10, [(5,), (9,)])
    for col, seed in enumerate([5, 9]):
        rec = run_trajectory(spectrum, psi0, obs, 0.7, 10, seed)
        np.testing.assert_array_equal(labels[:, col], rec.labels)
        np.testing.assert_allclose(energies[:, col], rec.energies, rtol=1e-15)


def test_ensemble_aggregation_consistency(small, small_stats):
    spectrum, obs, _ = small
    stats = small_stats
    assert stats.labels.shape == (13, 16)
    np.testing.assert_allclose(stats.times, np.arange(13) * 0.7, atol=1e-15)
    np.testing.assert_allclose(stats.empirical_p.sum(axis=1), np.ones(13),
                               atol=1e-12)
    np.testing.assert_allclose(stats.mean_trajectory,
                               stats.empirical_p @ obs.outcomes, atol=1e-12)
    ent = np.array([gibbs_entropy(row) for row in stats.empirical_p])
    np.testing.assert_allclose(stats.entropy_series, ent, atol=1e-12)
    # collapsed states stay inside the spectral range
    assert stats.energies.min() >= spectrum.energies[0] - 1e-8
    assert stats.energies.max() <= spectrum.energies[-1] + 1e-8


def test_ensemble_needs_two_realizations(small):
    spectrum, obs, psi0 = small
    with pytest.raises(ValueError):
        ensemble_run(spectrum, obs, psi0, dt=0.7, n_meas=3, n_real=1,
                     base_seed=0)


def test_unnormalized_state_rejected(small):
    spectrum, obs, psi0 = small
    with pytest.raises(ValueError):
        run_trajectory(spectrum, 2.0 * psi0, obs, 0.7, 3, 0)


def test_sector_probabilities_on_basis_states(small):
    spectrum, obs, _ = small
    engine = MeasurementEngine(spectrum, obs)
    p = engine.sector_probabilities(np.eye(spectrum.basis.dim, dtype=complex))
    expected = np.zeros_like(p)
    expected[obs.labels_natural, np.arange(spectrum.basis.dim)] = 1.0
    np.testing.assert_allclose(p, expected, atol=1e-15)


# ---------------------------------------------------------------------------
# conserved observable: measurements never move the state


@pytest.fixture(scope="module")
def conserved():
    pair = build_blbq_chain(2, 1, h_z=1.0, h_x=0.0, j=0.0, delta=0.3, q=0.5)
    spectrum = diagonalize(pair)
    obs = build_observable(pair, "sz_site_1")
    psi0 = free_state_vector(spectrum.basis, 2)
    return ensemble_run(spectrum, obs, psi0, dt=0.9, n_meas=8, n_real=4,
                        base_seed=1), spectrum, obs, psi0


def test_conserved_observable_freezes_labels(conserved):
    stats, spectrum, obs, psi0 = conserved
    np.testing.assert_array_equal(stats.labels, np.tile(stats.labels[0], (9, 1)))
    assert np.abs(stats.energies - stats.energies[0]).max() < 1e-10
    rep = consistent_histories_check(stats, spectrum, obs, psi0)
    assert rep["max_abs_z"] == 0.0
    drift = energy_drift_report(stats, spectrum)
    assert drift["mean_ratio"] < 1e-10
    assert drift["delta_e"] > 0


def test_drift_report_structure(small, small_stats):
    spectrum, _, _ = small
    rep = energy_drift_report(small_stats, spectrum)
    assert rep["sigma_e_series"].shape == (13,)
    assert rep["ratio_series"][0] == 0.0          # identical preparation
    assert rep["mean_ratio"] > 0
    assert np.isfinite(rep["delta_e_inf"])


def test_consistent_histories_probe_validation(small, small_stats):
    spectrum, obs, psi0 = small
    with pytest.raises(ValueError):
        consistent_histories_check(small_stats, spectrum, obs, psi0, [0])
    with pytest.raises(ValueError):
        consistent_histories_check(small_stats, spectrum, obs, psi0, [13])
    rep = consistent_histories_check(small_stats, spectrum, obs, psi0, [1, 12])
    assert [r["step"] for r in rep["rows"]] == [1, 12]
    assert all(np.isfinite(r["unmeasured"]) for r in rep["rows"])


# ---------------------------------------------------------------------------
# single-trajectory entropy bookkeeping


def test_single_trajectory_entropy_transient_cut():
    labels = np.array([0] * 20 + [1] * 20)
    out = single_trajectory_entropy(labels, dt=0.5, n_outcomes=2,
                                    gamma_ref=0.15)
    # 3 / (2 * 0.15) = 10 time units = 20 steps of dt = 0.5
    assert out["transient_steps"] == 20
    assert out["n_used"] == 20
    assert out["histogram"][1] == 1.0
    assert out["entropy"] == 0.0


def test_single_trajectory_entropy_fallback_quarter():
    labels = np.arange(40) % 2
    out = single_trajectory_entropy(labels, dt=0.5, n_outcomes=2,
                                    gamma_ref=None)
    assert out["transient_steps"] == 10
    assert out["entropy"] == pytest.approx(np.log(2), abs=1e-9)


def test_single_trajectory_entropy_clamps():
    labels = np.array([0, 1, 0, 1])
    tiny = single_trajectory_entropy(labels, 1.0, 2, gamma_ref=1e6)
    assert tiny["transient_steps"] == 1
    huge = single_trajectory_entropy(labels, 1.0, 2, gamma_ref=1e-6)
    assert huge["transient_steps"] == 3
    assert huge["n_used"] == 1


# ---------------------------------------------------------------------------
# classical reference chain


@pytest.fixture(scope="module")
def chain():
    kern = markov_kernel(np.array([0.10, 0.25, 0.30, 0.20, 0.15]), 0.35,
                         outcomes=np.arange(-2.0, 3.0))
    labels = simulate_kernel_chain(kern, dt=0.8, n_meas=14, n_real=10000,
                                   base_seed=(21, 0), s0=0)
    return kern, labels


def test_kernel_chain_rate_recovery(chain):
    kern, labels = chain
    times = np.arange(15) * 0.8
    series = kern.outcomes[labels].mean(axis=1)
    fit = fit_decay(times, series, window=(0.0, times[-1]))
    assert abs(fit.gamma - 0.35) / 0.35 < 0.05   # measured 0.357


def test_kernel_chain_mean_matches_prediction(chain):
    kern, labels = chain
    times = np.arange(15) * 0.8
    values = kern.outcomes[labels]
    se = values.std(axis=1, ddof=1) / np.sqrt(values.shape[1])
    predicted = kern.mean_value(0, times)
    z = (values.mean(axis=1) - predicted)[1:] / se[1:]
    assert np.abs(z).max() < 5.0


def test_kernel_chain_transition_counts(chain):
    kern, labels = chain
    counts = count_transitions(labels, 5)
    assert counts.sum() == 14 * 10000
    z, mask = transition_z_scores(counts, kern.matrix(0.8))
    assert mask.any()
    assert np.abs(z[mask]).max() < 4.5


def test_kernel_chain_seed_layout(chain):
    kern, _ = chain
    again = simulate_kernel_chain(kern, dt=0.8, n_meas=3, n_real=2,
                                  base_seed=(21, 0), s0=0)
    assert again.shape == (4, 2)
    assert np.all(again[0] == 0)
    with pytest.raises(ValueError):
        simulate_kernel_chain(kern, 0.8, 3, 2, 0, s0=7)


def test_count_transitions_hand_case():
    labels = np.array([0, 1, 1, 0, 2])
    counts = count_transitions(labels, 3)
    expected = np.zeros((3, 3), dtype=int)
    expected[0, 1] = 1
    expected[1, 1] = 1
    expected[1, 0] = 1
    expected[0, 2] = 1
    np.testing.assert_array_equal(counts, expected)
    lag2 = count_transitions(labels, 3, lag=2)
    assert lag2.sum() == 3
    assert lag2[0, 1] == 1 and lag2[1, 0] == 1 and lag2[1, 2] == 1
    shifted = count_transitions(labels, 3, start=2)
    assert shifted.sum() == 2
    assert shifted[1, 0] == 1 and shifted[0, 2] == 1


def test_count_transitions_validation():
    labels = np.array([0, 1, 0])
    with pytest.raises(ValueError):
        count_transitions(labels, 2, lag=0)
    with pytest.raises(ValueError):
        count_transitions(labels, 2, lag=3)
    with pytest.raises(ValueError):
        count_transitions(labels, 2, lag=1, start=2)


def test_transition_z_scores_masking():
    kmat = np.array([[0.9, 0.1], [0.5, 0.5]])
    counts = np.array([[90, 10], [0, 0]])   # no visits to state 1
    z, mask = transition_z_scores(counts, kmat)
    assert not mask[1].any()
    assert mask[0, 0] and mask[0, 1]
    np.testing.assert_allclose(z[0], 0.0, atol=1e-12)
