import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from graphhardy.eigen import spectral_decomposition
from graphhardy.graph import build_lattice
from graphhardy.markov import MarkovOperator
from graphhardy.results import HypothesisError
from graphhardy.sampling import mean_zero, random_function
from graphhardy.spectral import (MultiplierParseError, MultiplierSpec, beta_coefficients, bump,
                                 dyadic_decomposition, dyadic_exact_threshold, estimate_Rs,
                                 gradient, maximal_truncated_area, parse_multiplier,
                                 riesz_level_cap, riesz_transform_series,
                                 riesz_transform_spectral, smooth_cutoff, spectral_multiplier,
                                 sqrt_L, verify_GN_hardy, verify_multiplier_hardy,
                                 verify_riesz_hardy, verify_weighted_SL)
from graphhardy.tent import square_function_SL
from graphhardy.varexp import ExponentFunction, hl_maximal

G32 = build_lattice(1, 32)
OP32 = MarkovOperator(G32)
values = arrays(np.float64, 32, elements=st.floats(-100, 100))


def l2(g, f):
    return math.sqrt(float(np.sum(np.abs(f) ** 2 * g.mu)))


# -- gradient and Riesz transform ---------------------------------------

def test_gradient_examples(two_vertex, ring64, rng):
    np.testing.assert_allclose(gradient(two_vertex, np.array([1.0, 0.0])), [0.5, 0.5])
    g, _ = ring64
    assert not gradient(g, np.full(64, 7.0)).any()
    f = rng.standard_normal(64)
    np.testing.assert_allclose(gradient(g, f + 1j * f), math.sqrt(2) * gradient(g, f))


def test_gradient_isometry(ring128, rng):
    g, op = ring128
    for _ in range(100):
        f = rng.standard_normal(128)
        assert abs(l2(g, gradient(g, f)) - l2(g, sqrt_L(op, f))) <= 1e-8 * l2(g, f)


@given(values, values)
def test_gradient_sublinear(f, h):
    assert np.all(gradient(G32, f + h) <= gradient(G32, f) + gradient(G32, h) + 1e-9)


def test_beta_coefficients():
    beta = beta_coefficients(30)
    assert beta[:3] == [1.0, 0.5, 0.375]
    for k, b in enumerate(beta):
        assert b == pytest.approx(math.comb(2 * k, k) / 4 ** k, rel=1e-14)
    big = np.array(beta_coefficients(20000))
    k = np.arange(big.size)
    for lam in (0.05, 0.5, 1.0, 1.7):
        assert np.sum(big * (1 - lam) ** k) == pytest.approx(lam ** -0.5, rel=1e-10)


def test_riesz_eigenvector_and_zero(ring64):
    g, op = ring64
    sd = spectral_decomposition(op)
    phi = sd.eigenvectors[:, 5]
    lam = sd.eigenvalues[5]
    np.testing.assert_allclose(riesz_transform_spectral(g, op, phi),
                               gradient(g, phi) / math.sqrt(lam), rtol=1e-9, atol=1e-12)
    assert not riesz_transform_series(g, op, np.zeros(64), 10).any()
    with pytest.raises(HypothesisError):
        riesz_transform_spectral(g, op, np.ones(64))


def test_riesz_series_matches_spectral(ring64, rng):
    g, op = ring64
    K = riesz_level_cap(op, 1e-6)
    for _ in range(3):
        f = mean_zero(g, rng.standard_normal(64))
        err = l2(g, riesz_transform_series(g, op, f, K) - riesz_transform_spectral(g, op, f))
        assert err < 1e-6 * l2(g, f)


def test_riesz_isometry(ring64, rng):
    g, op = ring64
    f = mean_zero(g, rng.standard_normal(64))
    assert l2(g, riesz_transform_spectral(g, op, f)) == pytest.approx(l2(g, f), rel=1e-10)
    ratios = [l2(g, riesz_transform_series(g, op, f, K)) / l2(g, f) for K in (10, 100, 5000)]
    assert abs(ratios[-1] - 1) < abs(ratios[0] - 1) and abs(ratios[-1] - 1) < 1e-6


# -- functional calculus ------------------------------------------------

def test_multiplier_examples(ring64, rng):
    g, op = ring64
    f = rng.standard_normal(64)
    np.testing.assert_allclose(spectral_multiplier(op, MultiplierSpec.identity(), f), f, atol=1e-12)
    np.testing.assert_allclose(spectral_multiplier(op, lambda lam: lam, f), op.apply_L(f),
                               atol=1e-8)
    u = f.copy()
    for n in range(1, 9):
        u = op.P @ u
        np.testing.assert_allclose(spectral_multiplier(op, MultiplierSpec.heat(n), f), u,
                                   atol=1e-8)


def test_sqrt_squares_to_L(ring64, rng):
    g, op = ring64
    f = mean_zero(g, rng.standard_normal(64))
    np.testing.assert_allclose(sqrt_L(op, sqrt_L(op, f)), op.apply_L(f), atol=1e-8)


@given(arrays(np.float64, 4, elements=st.floats(-2, 2)),
       arrays(np.float64, 4, elements=st.floats(-2, 2)), values)
def test_polynomial_homomorphism(a, b, f):
    F = np.polynomial.Polynomial(a)
    G = np.polynomial.Polynomial(b)
    lhs = spectral_multiplier(OP32, F * G, f)
    rhs = spectral_multiplier(OP32, F, spectral_multiplier(OP32, G, f))
    assert np.allclose(lhs, rhs, atol=1e-8 * (1 + np.abs(f).max()))


def test_parse_multiplier(tmp_path):
    assert parse_multiplier("identity").name == "identity"
    assert parse_multiplier("heat:3")(np.array([0.5]))[0] == pytest.approx(0.125)
    ip = parse_multiplier("imaginary-power:2")
    assert ip(np.array([0.0]))[0] == 0 and abs(ip(np.array([0.7]))[0]) == pytest.approx(1.0)
    assert parse_multiplier("step")(np.array([0.5, 1.5])).tolist() == [1.0, 0.0]
    path = tmp_path / "F.txt"
    path.write_text("# lambda F\n0 1\n1 0.5\n2 0\n")
    assert parse_multiplier(f"file:{path}")(np.array([0.5]))[0] == pytest.approx(0.75)
    path.write_text("0 1\n1 x\n2 0\n")
    with pytest.raises(MultiplierParseError, match=":2:"):
        parse_multiplier(f"file:{path}")
    path.write_text("0 1\n1 0.5\n")
    with pytest.raises(MultiplierParseError, match="cover"):
        parse_multiplier(f"file:{path}")
    for bad in ("heat:-1", "heat:x", "wave", "identity:2"):
        with pytest.raises(MultiplierParseError):
            parse_multiplier(bad)


# -- dyadic pieces ------------------------------------------------------

def test_cutoff_and_bump():
    t = np.linspace(-1, 3, 4001)
    c = smooth_cutoff(t)
    assert np.all(c[t <= 1] == 1) and np.all(c[t >= 1.5] == 0)
    assert np.all(np.diff(c) <= 0)
    assert bump(np.array([1.0]))[0] == pytest.approx(1.0)
    assert not bump(np.array([0.5, 1.5, 0.2, 2.0])).any()


def test_dyadic_partition_and_supports():
    l_max = 8
    ones = dyadic_decomposition(MultiplierSpec.identity(), l_max)
    lam = np.linspace(dyadic_exact_threshold(l_max), 2.0, 20001)
    total = sum(F(lam) for F in ones)
    np.testing.assert_allclose(total, 1.0, atol=1e-10)
    fine = np.linspace(1e-6, 2.0, 200001)
    for l in range(1, l_max + 1):
        vals = ones[l](fine)
        inside = (fine >= 2.0 ** (-l - 1)) & (fine <= 3 * 2.0 ** (-l - 1))
        assert not vals[~inside].any()
        assert vals[inside].max() > 0.99


def test_dyadic_operator_tail_bound(ring128, rng):
    g, op = ring128
    sd = spectral_decomposition(op)
    spec = MultiplierSpec.imaginary_power(1.5)
    f = rng.standard_normal(128)
    sup = spec.sup_norm()
    for l0 in (0, 2, 4, 8, 12):
        pieces = dyadic_decomposition(spec, l0)
        full = spectral_multiplier(op, spec, f)
        part = sum(spectral_multiplier(op, F, f) for F in pieces)
        low = sd.eigenvalues < dyadic_exact_threshold(l0)
        tail = l2(g, sd.synthesize(np.where(low, sd.coefficients(f), 0.0)))
        assert l2(g, full - part) <= sup * tail * (1 + 1e-9) + 1e-12


# -- R_s estimates ------------------------------------------------------

def test_Rs_identity_is_bump_norm():
    res = estimate_Rs(MultiplierSpec.identity(), 1.5)
    assert min(res["per_t"]) == pytest.approx(max(res["per_t"]), rel=1e-12)
    assert res["is_estimate"]


def test_Rs_imaginary_power_grows_with_tau():
    est = [estimate_Rs(MultiplierSpec.imaginary_power(t), 1.5)["estimate"] for t in (1, 4, 16)]
    assert all(math.isfinite(e) for e in est)
    assert est[0] < est[1] < est[2]


def test_Rs_step_diverges_under_refinement():
    est = []
    for h in (1e-2, 1e-3, 1e-4):
        xs = np.linspace(0.5, 1.5, int(round(1 / h)) + 1)
        est.append(estimate_Rs(MultiplierSpec.step(), 1.0, x_grid=xs, h=h)["estimate"])
        smooth = estimate_Rs(MultiplierSpec.heat(5), 1.0, x_grid=xs, h=h)["estimate"]
        assert smooth < 10
    assert est[1] > 5 * est[0] and est[2] > 5 * est[1]


# -- Hardy-space verifiers ----------------------------------------------

def test_multiplier_hardy(ring64, rng):
    g, op = ring64
    p = ExponentFunction.constant(g, 1.5)
    ident = verify_multiplier_hardy(g, op, p, MultiplierSpec.identity(), 2.0, 2, 3, rng, D=1.07,
                                    n_atoms=1)
    assert ident.fitted_C == pytest.approx(1.0, rel=1e-10)
    heat = verify_multiplier_hardy(g, op, p, MultiplierSpec.heat(5), 2.0, 2, 3, rng, D=1.07,
                                   n_atoms=2)
    assert 0 < heat.fitted_C < 10
    assert heat.extra["best_eps"] > 1.07 / 1.5
    with pytest.raises(HypothesisError, match="s > 2D"):
        verify_multiplier_hardy(g, op, p, MultiplierSpec.heat(5), 1.0, 2, 1, rng, D=1.07)
    with pytest.raises(HypothesisError, match="R_s"):
        verify_multiplier_hardy(g, op, p, MultiplierSpec.step(), 2.0, 2, 1, rng, D=1.07,
                                rs_cap=1e3)


def test_riesz_and_GN_hardy(ring64, rng):
    g, op = ring64
    p = ExponentFunction.log_family(g, 1.1, 0.5)
    r = verify_riesz_hardy(g, op, p, 3, 4, rng, n_atoms=2)
    assert r.trials == 6 and 0 < r.fitted_C < 20
    gn = verify_GN_hardy(g, op, p, 2, 4, rng)
    assert 0 < gn.fitted_C < 20
    with pytest.raises(HypothesisError):
        verify_riesz_hardy(g, op, ExponentFunction.constant(g, 2.0), 3, 1, rng)


def test_maximal_truncated_area(ring64, rng):
    g, op = ring64
    f = mean_zero(g, rng.standard_normal(64))
    c2 = maximal_truncated_area(g, op, f, 2.0)
    S = square_function_SL(g, op, f)
    # the whole-graph ball bounds the supremum from below
    assert np.all(c2 >= math.sqrt(np.sum(S ** 2 * g.mu) / g.total_measure) * (1 - 1e-12))
    assert np.max(c2 / np.sqrt(hl_maximal(g, f ** 2))) < 20
    assert not maximal_truncated_area(g, op, np.zeros(64), 2.0).any()


def test_weighted_SL(ring64):
    g, op = ring64
    one = np.ones(64)
    a = verify_weighted_SL(g, op, one, 2.0, 4, np.random.default_rng(7))
    f_rng = np.random.default_rng(7)
    plain = []
    for _ in range(4):
        f = random_function(g, f_rng, mean_zero_=True)
        plain.append(l2(g, square_function_SL(g, op, f)) / l2(g, f))
    assert a.fitted_C == pytest.approx(max(plain), rel=1e-10)
    w = (1 + g.dist[0]) ** 0.5
    b = verify_weighted_SL(g, op, w, 2.0, 3, np.random.default_rng(1))
    assert 0 < b.fitted_C < 20 and all(v < 50 for v in b.extra["domination_C"].values())
    spike = one.copy()
    spike[3] = 1e9
    with pytest.raises(HypothesisError, match="A_q"):
        verify_weighted_SL(g, op, spike, 2.0, 1, np.random.default_rng(1))
    with pytest.raises(HypothesisError):
        verify_weighted_SL(g, op, one, 1.0, 1, np.random.default_rng(1))
