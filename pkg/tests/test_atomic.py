import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from graphhardy.atomic import (C_ETA, HardyAtomCertificate, MoleculeCertificate,
                               SimpleAtomCertificate, coefficient_table, coefficients_c, hardy_atomic_decomposition,
                               level_cap_for, molecule_from_tent_atom, pi_M, random_hardy_atom,
                               random_simple_atom, random_tent_atom,
                               representation_residual_oracle, tent_atomic_decomposition,
                               verify_atom_synthesis, verify_equal_lebesgue, verify_hardy_atom,
                               verify_molecular_synthesis, verify_molecule, verify_mplus_bound,
                               verify_pi_M_bound, verify_representation, verify_simple_atom,
                               verify_simple_atom_bound)
from graphhardy.eigen import spectral_decomposition
from graphhardy.graph import Ball, build_lattice
from graphhardy.results import HypothesisError
from graphhardy.sampling import mean_zero
from graphhardy.tent import TentFunction
from graphhardy.varexp import ExponentFunction, ball_indicator_norm

D1 = 1.07   # doubling exponent fitted on ℤ/64 (rounded up)


# -- coefficients -------------------------------------------------------

def test_coefficient_examples():
    assert C_ETA == 26
    for k in range(50):
        assert coefficients_c(k, 1) == 1
        assert coefficients_c(k, 2) == k + 1
        assert coefficients_c(k, 3) == (k + 1) * (k + 2) // 2
    with pytest.raises(ValueError):
        coefficients_c(-1, 2)
    with pytest.raises(ValueError):
        coefficients_c(0, 0)


def test_coefficient_recursion_is_integer_exact():
    table = coefficient_table(300, 7)
    for N, row in enumerate(table, start=1):
        assert all(isinstance(v, int) for v in row)
        assert row == [coefficients_c(k, N) for k in range(301)]


def test_coefficient_bound():
    for M in range(1, 7):
        for k in range(0, 10001, 97):
            assert 0 <= coefficients_c(k, M + 1) <= (k + 1) ** M


# -- Π_M and the representation formula ---------------------------------

def test_pi_M_zero_and_level_one(ring64, rng):
    g, op = ring64
    assert not pi_M(g, op, TentFunction.zeros(64, 5), 2).a.any()
    F = TentFunction.zeros(64, 3)
    F.values[:, 0] = rng.standard_normal(64)
    L = np.eye(64) - op.P.toarray()
    for M in (1, 2, 4):
        expected = np.linalg.matrix_power(L, M) @ F.values[:, 0]
        np.testing.assert_allclose(pi_M(g, op, F, M).a, expected, atol=1e-13)


def test_pi_M_against_dense_sum(ring64, rng):
    g, op = ring64
    K, M = 9, 2
    F = TentFunction(rng.standard_normal((64, K)), 64)
    P = op.P.toarray()
    L = np.eye(64) - P
    expected = np.zeros(64)
    for k in range(K):
        w = coefficients_c(k, M + 1) / (k + 1)
        expected += w * np.linalg.matrix_power(L, M) @ np.linalg.matrix_power(P, k // 2) @ F.values[:, k]
    for method in ("sparse", "spectral"):
        res = pi_M(g, op, F, M, method=method)
        np.testing.assert_allclose(res.a, expected, atol=1e-11)
        np.testing.assert_allclose(res.powers[-1], res.a)
    with pytest.raises(ValueError):
        pi_M(g, op, F, 0)


def test_pi_M_bounded(ring64, rng):
    g, op = ring64
    res = verify_pi_M_bound(g, op, 2, 2.0, 6, rng)
    assert 0 < res.fitted_C < 10


def test_representation_eigen_oracle(ring64):
    g, op = ring64
    sd = spectral_decomposition(op)
    Ks = [1, 10, 100, 1000]
    for i in (1, 10, 40, 63):
        phi = sd.eigenvectors[:, i]
        for M in (1, 2, 3):
            got = verify_representation(g, op, phi, M, Ks)
            oracle = representation_residual_oracle(sd.eigenvalues[i], M, Ks) * op.norm2(phi)
            np.testing.assert_allclose(got, oracle, atol=1e-8)


def test_representation_constant_not_representable(ring64):
    g, op = ring64
    one = np.ones(64)
    np.testing.assert_allclose(verify_representation(g, op, one, 2, [1, 50]), op.norm2(one))


def test_level_cap_is_minimal():
    for gap, M, tol in ((0.01, 2, 1e-4), (0.3, 3, 1e-8), (1.0, 1, 1e-3)):
        K = level_cap_for(gap, M, tol)
        assert representation_residual_oracle(gap, M, [K])[0] <= tol * (1 + 1e-9)
        if K > 1:
            assert representation_residual_oracle(gap, M, [K - 1])[0] > tol


# -- tent decomposition -------------------------------------------------

def test_tent_decomposition_zero(ring64):
    g, _ = ring64
    d = tent_atomic_decomposition(g, ExponentFunction.constant(g, 1), TentFunction.zeros(64, 4))
    assert d.atoms == [] and d.aggregate == 0.0 and d.reconstruction_error == 0.0


def test_tent_decomposition_invariants(ring128, rng):
    g, _ = ring128
    p = ExponentFunction.log_family(g, 0.8, 0.4)
    for _ in range(3):
        F = TentFunction(rng.standard_normal((128, 16)) * (rng.random((128, 16)) < 0.5), 128)
        d = tent_atomic_decomposition(g, p, F, q=2)
        assert d.reconstruction_error < 1e-10
        np.testing.assert_allclose(d.reconstruct(128, 16), F.values, atol=1e-10)
        assert d.support_ok and d.pointwise_ok
        assert 0 < d.rescale_C < math.inf
        assert 0 < d.ratio < math.inf
        for a in d.atoms:
            assert a.lam > 0 and a.payload.values.any()


def test_tent_decomposition_of_a_single_atom(ring64, rng):
    g, _ = ring64
    p = ExponentFunction.constant(g, 1.5)
    payload, ball = random_tent_atom(g, p, 2.0, rng, max_radius=10)
    d = tent_atomic_decomposition(g, p, payload, q=2)
    assert d.reconstruction_error < 1e-10
    assert d.support_ok


def test_whole_graph_level_uses_global_ball():
    g = build_lattice(1, 16)
    p = ExponentFunction.constant(g, 1.0)
    F = TentFunction(np.ones((16, 3)), 16)
    d = tent_atomic_decomposition(g, p, F)
    assert d.reconstruction_error < 1e-12
    assert any(a.ball.radius >= g.diameter + 3 for a in d.atoms)


# -- Hardy atoms and decompositions ------------------------------------

def test_random_hardy_atom_is_certified(ring64, rng):
    g, op = ring64
    p = ExponentFunction.log_family(g, 1.2, 0.4)
    for _ in range(5):
        cert = random_hardy_atom(g, op, p, 2.0, 3, rng, max_radius=12)
        rep = verify_hardy_atom(g, op, p, cert)
        assert rep["passed"], rep
        assert abs(np.sum(cert.a * g.mu)) < 1e-12 * np.abs(cert.a).sum()
    broken = cert.scaled(1.5)
    assert not verify_hardy_atom(g, op, p, broken)["size"]
    moved = random_hardy_atom(g, op, p, 2.0, 3, rng, ball=Ball(0, 6))
    moved.powers[1] = np.roll(moved.powers[1], 20)
    rep = verify_hardy_atom(g, op, p, moved)
    assert not rep["support"] and not rep["identity"]


def test_hardy_round_trip_single_atom(ring64, rng):
    g, op = ring64
    p = ExponentFunction.constant(g, 1.5)
    f = random_hardy_atom(g, op, p, 2.0, 3, rng, ball=Ball(10, 8)).a
    d = hardy_atomic_decomposition(g, op, p, f, 2.0, 3, D=D1, rtol=1e-7)
    assert d.relative_residual < 1e-6
    assert all(verify_hardy_atom(g, op, p, c, support_rtol=1e-8)["passed"] for c in d.certificates)
    assert 0 < d.ratio < 1e3
    np.testing.assert_allclose(d.reconstruct(), f, atol=1e-6 * np.abs(f).max())


def test_hardy_decomposition_random(ring64, rng):
    g, op = ring64
    p = ExponentFunction.log_family(g, 1.2, 0.4)
    f = mean_zero(g, rng.standard_normal(64))
    d = hardy_atomic_decomposition(g, op, p, f, 2.0, 3, D=D1)
    assert d.relative_residual < 1e-3
    assert all(verify_hardy_atom(g, op, p, c, support_rtol=1e-8)["passed"] for c in d.certificates)
    for c in d.certificates:
        assert c.ball.radius % 5 == 0      # (M + 2) r_B with M = 3


def test_hardy_decomposition_errors(ring64):
    g, op = ring64
    p = ExponentFunction.constant(g, 1.5)
    f = mean_zero(g, np.arange(64.0))
    with pytest.raises(HypothesisError, match="r >= 2"):
        hardy_atomic_decomposition(g, op, p, f, 1.5, 3, D=D1)
    with pytest.raises(HypothesisError, match="r > p_plus"):
        hardy_atomic_decomposition(g, op, ExponentFunction.constant(g, 2.5), f, 2.0, 5, D=D1)
    with pytest.raises(HypothesisError, match="M > 2D/p_minus"):
        hardy_atomic_decomposition(g, op, p, f, 2.0, 1, D=D1)
    with pytest.raises(HypothesisError, match="mean-zero"):
        hardy_atomic_decomposition(g, op, p, np.arange(64.0), 2.0, 3, D=D1)
    empty = hardy_atomic_decomposition(g, op, p, np.zeros(64), 2.0, 3, D=D1)
    assert empty.certificates == [] and empty.aggregate == 0.0


def test_atom_synthesis(ring64, rng):
    g, op = ring64
    p = ExponentFunction.constant(g, 1.5)
    fams = []
    for _ in range(3):
        certs = [random_hardy_atom(g, op, p, 2.0, 3, rng, max_radius=10) for _ in range(4)]
        fams.append((np.abs(rng.standard_normal(4)) + 0.1, certs))
    fams.append((np.zeros(2), certs[:2]))
    res = verify_atom_synthesis(g, op, p, fams, 2.0, 3, D=D1)
    assert 0 < res.fitted_C < 100
    assert res.ratios[-1] == 0.0
    bad = certs[0].scaled(3.0)
    with pytest.raises(ValueError, match="family 0: certificate 1"):
        verify_atom_synthesis(g, op, p, [(np.ones(2), [certs[1], bad])], 2.0, 3, D=D1)


# -- molecules ----------------------------------------------------------

def test_compact_atom_is_a_molecule_for_every_eps(ring128, rng):
    # a witness inside B(x_B, r_B/2) leaves every annulus j >= 1 empty
    g, op = ring128
    p = ExponentFunction.constant(g, 1.5)
    ball, M = Ball(40, 16), 3
    b = np.where(g.dist[40] < 8 - M, rng.standard_normal(128), 0.0)
    powers = [b]
    for _ in range(M):
        powers.append(powers[-1] - op.P @ powers[-1])
    raw = HardyAtomCertificate(powers[-1], powers, ball, 2.0, M)
    scale = verify_hardy_atom(g, op, p, raw)["max_size_ratio"] * (1 + 1e-12)
    cert = raw.scaled(1 / scale)
    assert verify_hardy_atom(g, op, p, cert)["passed"]
    for eps in (0.1, 1.0, 5.0, 50.0):
        mol = MoleculeCertificate(cert.a, cert.powers, ball, 2.0, M, eps)
        rep = verify_molecule(g, p, mol)
        assert rep.passed
        assert not rep.ratios[:, 1:].any()


def test_molecule_counterexample_names_the_annulus(ring128, rng):
    g, op = ring128
    p = ExponentFunction.constant(g, 1.5)
    ball = Ball(40, 4)
    cert = random_hardy_atom(g, op, p, 2.0, 2, rng, ball=Ball(40, 2 + 2))
    powers = [u * 1e-3 for u in cert.powers]
    eps = 1.0
    # one vertex at distance 2 r_B: inside annuli j = 1 and j = 2 only
    y = 48
    big = Ball(40, 4 * 4)
    rhs = 4 ** (2 - 1) * 2.0 ** (-2 * eps) * big.measure(g) ** 0.5 / ball_indicator_norm(p, big)
    powers[1] = powers[1].copy()
    powers[1][y] = 2 * rhs / math.sqrt(g.mu[y])
    rep = verify_molecule(g, p, MoleculeCertificate(powers[-1], powers, ball, 2.0, 2, eps))
    assert not rep.passed
    assert rep.worst == (1, 2)
    assert rep.ratios[1, 2] == pytest.approx(2.0, rel=1e-9)


def test_pi_M_of_tent_atom_is_a_molecule_after_rescale(ring64, rng):
    g, op = ring64
    p = ExponentFunction.constant(g, 1.5)
    payload, ball = random_tent_atom(g, p, 2.0, rng, max_radius=8)
    mol = molecule_from_tent_atom(g, op, payload, ball, 2.0, 3, D1 / 1.5 + 0.5)
    rep = verify_molecule(g, p, mol)
    assert math.isfinite(rep.required_scale) and rep.required_scale > 0
    scaled = MoleculeCertificate(mol.m / rep.required_scale,
                                 [u / rep.required_scale for u in mol.powers],
                                 ball, 2.0, 3, mol.eps)
    assert verify_molecule(g, p, scaled).passed


def test_molecular_synthesis_hypotheses(ring64, rng):
    g, op = ring64
    p = ExponentFunction.constant(g, 1.5)
    payload, ball = random_tent_atom(g, p, 2.0, rng, max_radius=8)
    mol = molecule_from_tent_atom(g, op, payload, ball, 2.0, 3, 1.5)
    res = verify_molecular_synthesis(g, op, p, [(np.array([1.0]), [mol]),
                                                (np.array([0.0]), [mol])], 2.0, 3, 1.5, D=D1)
    assert res.fitted_C > 0 and res.ratios[1] == 0.0
    with pytest.raises(HypothesisError, match="eps"):
        verify_molecular_synthesis(g, op, p, [], 2.0, 3, 0.5, D=D1)
    with pytest.raises(HypothesisError, match="q >= 2"):
        verify_molecular_synthesis(g, op, p, [], 1.8, 3, 1.5, D=D1)


# -- cancellative atoms, M_+ and norm equivalence -----------------------

def test_simple_atoms(ring128, rng):
    g, op = ring128
    p = ExponentFunction.constant(g, 1.5)
    atoms = [random_simple_atom(g, p, rng, max_radius=12) for _ in range(8)]
    assert all(verify_simple_atom(g, p, a) for a in atoms)
    shifted = SimpleAtomCertificate(atoms[0].a + 1e-3 * atoms[0].ball.mask(g), atoms[0].ball)
    assert not verify_simple_atom(g, p, shifted)
    res = verify_simple_atom_bound(g, op, p, [(np.ones(8), atoms), (np.zeros(8), atoms)], K=400)
    assert 0 < res.fitted_C < 100
    with pytest.raises(HypothesisError, match="p_plus < 2"):
        verify_simple_atom_bound(g, op, ExponentFunction.constant(g, 2.0), [], K=10)


def test_mplus_bound(ring64, rng):
    g, op = ring64
    p = ExponentFunction.log_family(g, 1.2, 0.4)
    fs = [mean_zero(g, rng.standard_normal(64)) for _ in range(4)] + [np.ones(64)]
    res = verify_mplus_bound(g, op, p, fs, K=400)
    assert res.trials == 4 and 0 < res.fitted_C < 100


def test_equal_lebesgue(ring64, rng):
    g, op = ring64
    res = verify_equal_lebesgue(g, op, ExponentFunction.constant(g, 2), 6, rng)
    assert 1 <= res.fitted_C < 100
    assert res.extra["max_f_over_SL"] >= 1 / res.extra["min_SL_over_f"] * (1 - 1e-12)
    with pytest.raises(HypothesisError):
        verify_equal_lebesgue(g, op, ExponentFunction.constant(g, 1.0), 2, rng)


@given(st.integers(0, 2 ** 32 - 1))
def test_tent_reconstruction_property(seed):
    g = build_lattice(1, 32)
    rng = np.random.default_rng(seed)
    p = ExponentFunction.log_family(g, 0.7 + rng.random(), rng.random())
    K = int(rng.integers(1, 10))
    F = TentFunction(rng.standard_normal((32, K)) * (rng.random((32, K)) < 0.4), 32)
    d = tent_atomic_decomposition(g, p, F)
    assert d.reconstruction_error < 1e-10
    assert d.support_ok and d.pointwise_ok
