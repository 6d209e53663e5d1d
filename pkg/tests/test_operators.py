"""Single-site operators and product-space embedding."""

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from jumplab.operators import (bond_hop, level_hop, op_on_site,
                               pauli_matrices, spin_matrices, two_site_op)

SPINS = [0.5, 1.0, 1.5, 2.0, 2.5, 3.0]


def test_spin_z_descending():
    s = spin_matrices(1.5)
    assert np.array_equal(np.diag(s["z"]), [1.5, 0.5, -0.5, -1.5])
    assert np.array_equal(s["z"], np.diag(np.diag(s["z"])))


def test_ladder_element_convention():
    # <m+1|S+|m> = sqrt(S(S+1) - m(m+1)); for S=1, m=0 that is sqrt(2)
    s = spin_matrices(1.0)
    assert s["plus"][0, 1] == pytest.approx(np.sqrt(2.0))
    assert s["plus"][1, 2] == pytest.approx(np.sqrt(2.0))
    assert np.array_equal(s["minus"], s["plus"].T)


@given(st.sampled_from(SPINS))
def test_su2_algebra(spin):
    s = spin_matrices(spin)
    sz, sx, y = s["z"], s["x"], s["y_imag"]
    # [Sz, S+] = S+ and, with S_y = iY: [Sx, Y] = Sz
    np.testing.assert_allclose(sz @ s["plus"] - s["plus"] @ sz, s["plus"],
                               atol=1e-12)
    np.testing.assert_allclose(sx @ y - y @ sx, sz, atol=1e-12)
    # Casimir: Sx^2 + Sy^2 + Sz^2 = S(S+1), with Sy^2 = -Y^2
    casimir = sx @ sx - y @ y + sz @ sz
    np.testing.assert_allclose(casimir, spin * (spin + 1) * np.eye(len(sz)),
                               atol=1e-12)
    assert np.max(np.abs(y + y.T)) < 1e-15   # Y real antisymmetric


@pytest.mark.parametrize("bad", [0.0, -1.0, 0.3])
def test_spin_rejects_non_half_integers(bad):
    with pytest.raises(ValueError):
        spin_matrices(bad)


def test_pauli_matrices():
    p = pauli_matrices()
    assert np.array_equal(p["z"], [[1, 0], [0, -1]])
    assert np.array_equal(p["x"], [[0, 1], [1, 0]])
    assert np.array_equal(p["y_imag"], [[0, -1], [1, 0]])


def test_op_on_site_placement():
    op = np.array([[0.0, 2.0], [2.0, 1.0]])
    np.testing.assert_array_equal(op_on_site(op, 0, [2, 3]),
                                  np.kron(op, np.eye(3)))
    np.testing.assert_array_equal(op_on_site(op, 1, [3, 2]),
                                  np.kron(np.eye(3), op))


def test_two_site_op():
    a = np.diag([1.0, -1.0])
    b = np.array([[0.0, 1.0], [1.0, 0.0]])
    np.testing.assert_array_equal(two_site_op(a, 0, b, 1, [2, 2]),
                                  np.kron(a, b))
    # embedding order follows the site index, not the argument order
    np.testing.assert_array_equal(two_site_op(a, 1, b, 0, [2, 2]),
                                  np.kron(b, a))
    with pytest.raises(ValueError):
        two_site_op(a, 1, b, 1, [2, 2])


def test_level_hop_and_bond_hop():
    lo = level_hop(4)
    expected = np.zeros((4, 4))
    expected[[0, 1, 2], [1, 2, 3]] = 1.0
    np.testing.assert_array_equal(lo, expected)

    k = bond_hop(5, 2)
    assert k[2, 3] == 1.0 and k[3, 2] == 1.0
    assert np.count_nonzero(k) == 2
    np.testing.assert_array_equal(k, k.T)
