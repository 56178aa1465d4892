import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from graphhardy.graph import build_lattice
from graphhardy.whitney import WhitneyError, global_density_set, whitney_cover

G64 = build_lattice(1, 64)
G8x8 = build_lattice(2, 8)


def test_single_vertex():
    omega = np.zeros(64, dtype=bool)
    omega[20] = True
    cov = whitney_cover(G64, omega)
    assert list(cov.centers) == [20]
    assert cov.radii[0] == pytest.approx(0.1)
    np.testing.assert_array_equal(cov.phi[0], omega.astype(float))
    assert all(cov.verify(G64).values())


def test_complement_of_a_point():
    omega = np.ones(64, dtype=bool)
    omega[0] = False
    cov = whitney_cover(G64, omega)
    np.testing.assert_allclose(cov.radii, G64.dist[0, cov.centers] / 10)
    assert cov.radii.max() == pytest.approx(3.2)
    assert all(cov.verify(G64).values())
    assert cov.overlap >= 1


def test_rejects_empty_and_whole():
    with pytest.raises(WhitneyError):
        whitney_cover(G64, np.zeros(64, dtype=bool))
    with pytest.raises(WhitneyError):
        whitney_cover(G64, np.ones(64, dtype=bool))


def test_density_set_against_ball_scan():
    F = np.zeros(64, dtype=bool)
    F[5:40] = True
    for gamma in (0.2, 0.5, 0.9):
        got = global_density_set(G64, F, gamma)
        expected = np.array([all(F[G64.dist[x] < r].mean() >= gamma
                                 for r in range(1, G64.n_radii + 1)) for x in range(64)])
        np.testing.assert_array_equal(got, expected)
    assert global_density_set(G64, np.ones(64, dtype=bool), 0.5).all()
    assert not global_density_set(G64, np.zeros(64, dtype=bool), 0.5).any()
    with pytest.raises(ValueError):
        global_density_set(G64, F, 1.0)


@given(arrays(bool, 64, elements=st.booleans()))
def test_random_sets_ring(omega):
    if omega.all() or not omega.any():
        return
    assert all(whitney_cover(G64, omega).verify(G64).values())


@given(arrays(bool, 64, elements=st.booleans()), st.floats(0.05, 0.95))
def test_random_sets_grid(F, gamma):
    omega = ~global_density_set(G8x8, F, gamma)
    if omega.all() or not omega.any():
        return
    assert all(whitney_cover(G8x8, omega).verify(G8x8).values())
