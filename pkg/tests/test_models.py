"""Model builders and measured observables."""

import numpy as np
import pytest

from jumplab.models import (build_blbq_chain, build_observable,
                            build_oscillator_chain, build_spin_half_chain)


def test_heisenberg_point_of_bilinear_chain():
    # two spin-1 sites, J=1, Delta=1, q=0, no fields: V = S1.S2, whose
    # spectrum by total-spin decomposition is {-2 x1, -1 x3, +1 x5}
    pair = build_blbq_chain(2, 1.0, h_z=0.0, h_x=0.0, j=1.0, delta=1.0, q=0.0)
    assert pair.dim == 9
    np.testing.assert_allclose(pair.h0_diag, np.zeros(9), atol=1e-12)
    vals = np.linalg.eigvalsh(pair.v)
    np.testing.assert_allclose(vals, [-2, -1, -1, -1, 1, 1, 1, 1, 1],
                               atol=1e-9)


def test_xx_bath_spectrum():
    # two bath qubits coupled only by the XX term have levels {-2, 0, 0, 2}
    pair = build_spin_half_chain(3, b_z_s=0.8, b_z_b=0.0, b_x_b=0.0,
                                 j_z_b=0.0, j_x_b=1.0, j_z_sb=0.0, j_x_sb=0.0)
    np.testing.assert_allclose(np.sort(pair.basis.bath_energies),
                               [-2.0, 0.0, 0.0, 2.0], atol=1e-12)
    assert np.max(np.abs(pair.v)) < 1e-12   # system decoupled


def test_decoupled_zeeman_levels():
    pair = build_spin_half_chain(3, b_z_s=1.0, b_z_b=0.0, b_x_b=0.0,
                                 j_z_b=0.0, j_x_b=0.0, j_z_sb=0.0, j_x_sb=0.0)
    np.testing.assert_allclose(np.sort(pair.basis.energies),
                               [-1.0] * 4 + [1.0] * 4, atol=1e-12)


def test_position_projector_ranks(osc4_pair, osc4_observable):
    obs = osc4_observable
    np.testing.assert_array_equal(obs.outcomes, np.arange(-3.0, 4.0))
    for i in range(obs.n_outcomes):
        # trace of a projector = rank; the cheap diagonal is enough
        assert obs.projector_free_diagonal(i).sum() == pytest.approx(343.0)


def test_projector_decomposition_small():
    pair = build_oscillator_chain(2, 1, h_x=0.7, j=0.8)
    obs = build_observable(pair, "position_site_1")
    total = np.zeros((pair.dim, pair.dim))
    recomposed = np.zeros_like(total)
    for i, s in enumerate(obs.outcomes):
        p = obs.projector(i)
        np.testing.assert_allclose(p @ p, p, atol=1e-12)
        total += p
        recomposed += s * p
    np.testing.assert_allclose(total, np.eye(pair.dim), atol=1e-12)
    np.testing.assert_allclose(recomposed, obs.matrix(), atol=1e-12)


def test_single_site_position_matrix():
    pair = build_oscillator_chain(1, 1, h_x=0.3, j=0.0)
    obs = build_observable(pair, "position_site_1")
    # free order sorts energies (1, 0, 1) -> (0, 1, 1), so the position
    # diagonal (-1, 0, 1) becomes (0, -1, 1)
    np.testing.assert_allclose(obs.matrix(), np.diag([0.0, -1.0, 1.0]),
                               atol=1e-12)


def test_global_spin_outcomes():
    pair = build_blbq_chain(2, 0.5, h_z=0.9, h_x=0.0, j=0.3, delta=1.0, q=0.0)
    obs = build_observable(pair, "sz_global")
    np.testing.assert_allclose(obs.outcomes, [-1.0, 0.0, 1.0])
    ranks = [obs.projector_free_diagonal(i).sum() for i in range(3)]
    np.testing.assert_allclose(ranks, [1.0, 2.0, 1.0], atol=1e-12)
    assert not obs.system_local


def test_system_local_projectors_commute_with_h0():
    pair = build_oscillator_chain(3, 2, h_x=0.7, j=0.8)
    obs = build_observable(pair, "position_site_1")
    h0 = pair.h0()
    for i in range(obs.n_outcomes):
        p = obs.projector(i)
        assert np.max(np.abs(p @ h0 - h0 @ p)) < 1e-12


def test_observable_labels_consistent():
    pair = build_blbq_chain(2, 1.0, h_z=1.0, h_x=0.2, j=0.8, delta=0.3, q=1.5)
    for name in ("sz_site_1", "sz_global"):
        obs = build_observable(pair, name)
        assert np.all(np.diff(obs.outcomes) > 0)
        np.testing.assert_allclose(obs.values_natural,
                                   obs.outcomes[obs.labels_natural])


def test_projector_observable():
    pair = build_oscillator_chain(2, 1, h_x=0.5, j=0.4)
    obs = build_observable(pair, "projector", value=1.0)
    np.testing.assert_array_equal(obs.outcomes, [0.0, 1.0])
    assert obs.values_natural.sum() == pytest.approx(3.0)  # one site level
    with pytest.raises(ValueError):
        build_observable(pair, "projector", value=0.25)
    with pytest.raises(ValueError):
        build_observable(pair, "sz_site_1")   # wrong model family


def test_builders_are_pure():
    a = build_oscillator_chain(2, 2, h_x=0.7, j=0.8)
    b = build_oscillator_chain(2, 2, h_x=0.7, j=0.8)
    np.testing.assert_array_equal(a.v, b.v)
    np.testing.assert_array_equal(a.basis.energies, b.basis.energies)


def test_reflection_symmetry_of_uniform_chain():
    pair = build_oscillator_chain(3, 2, h_x=0.7, j=0.8)
    b = pair.basis.vectors()
    h_nat = b @ pair.total() @ b.T
    d = 5
    idx = np.arange(d ** 3).reshape(d, d, d).transpose(2, 1, 0).ravel()
    np.testing.assert_allclose(h_nat[np.ix_(idx, idx)], h_nat, atol=1e-10)


def test_dimension_cap():
    with pytest.raises(ValueError):
        build_oscillator_chain(4, 3, h_x=0.7, j=0.8, max_dim=100)


def test_coupling_target_validation():
    with pytest.raises(ValueError):
        build_spin_half_chain(3, b_z_s=0.8, b_z_b=0.3, b_x_b=0.0,
                              j_z_b=0.1, j_x_b=1.0, j_z_sb=0.2, j_x_sb=0.4,
                              n_m=7)
