import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from graphhardy.eigen import spectral_decomposition
from graphhardy.graph import build_lattice, two_lattices_joined
from graphhardy.markov import (MarkovOperator, fit_composite_bound, fit_gaussian_upper,
                               fit_holder_regularity, gaussian_bound, write_heat_kernel_csv)


def test_two_vertex_examples(two_vertex):
    op = MarkovOperator(two_vertex)
    f = np.array([1.0, 0.0])
    np.testing.assert_allclose(op.apply_P(f), [0.5, 0.5])
    np.testing.assert_allclose(op.apply_L(f), [0.5, -0.5])
    np.testing.assert_allclose(op.apply_L_power(0, f), f)
    assert op.heat_kernel_row(0, 2)[0] == pytest.approx(0.5)


def test_constants(ring64):
    g, op = ring64
    one = np.ones(g.n_vertices)
    np.testing.assert_allclose(op.apply_P(one), one, atol=1e-14)
    np.testing.assert_allclose(op.apply_L(one), 0.0, atol=1e-14)


def test_heat_rows(ring64):
    g, op = ring64
    P = op.P.toarray()
    np.testing.assert_allclose(op.heat_kernel_row(3, 1), P[3])
    for n in (0, 1, 5, 40):
        assert op.heat_kernel_row(7, n).sum() == pytest.approx(1.0, abs=1e-12)
    np.testing.assert_allclose(op.composite_kernel_row(2, 6, 0), op.heat_kernel_row(2, 6))
    assert abs(op.composite_kernel_row(2, 6, 1).sum()) < 1e-13
    np.testing.assert_allclose(op.heat_kernel_table(5, 10)[10], op.heat_kernel_row(5, 10), atol=1e-15)


def test_finite_propagation(ring64):
    g, op = ring64
    row = op.heat_kernel_row(0, 10)
    assert np.all(row[g.dist[0] > 10] == 0)


def test_reversibility_all_powers(ring64):
    g, op = ring64
    for n in range(1, 33):
        Pn = op.dense_power(n)
        A = Pn * g.mu[:, None]
        assert np.abs(A - A.T).max() < 1e-10


@given(st.integers(0, 15), st.integers(0, 15), st.integers(0, 63), st.integers(0, 63))
def test_semigroup(n, m, x, y):
    g = build_lattice(1, 64)
    op = MarkovOperator(g)
    lhs = op.heat_kernel_row(x, n + m)[y]
    Pm = op.dense_power(m)
    rhs = op.heat_kernel_row(x, n) @ Pm[:, y]
    assert abs(lhs - rhs) < 1e-10


@given(arrays(float, 36, elements=st.floats(-10, 10)), arrays(float, 36, elements=st.floats(-10, 10)))
def test_self_adjoint_and_contraction(f, h):
    g = build_lattice(2, 6, boundary_mode="reflecting")
    op = MarkovOperator(g)
    assert abs(op.inner(op.apply_P(f), h) - op.inner(f, op.apply_P(h))) < 1e-10 * (1 + op.norm2(f) * op.norm2(h))
    assert op.norm2(op.apply_P(f)) <= op.norm2(f) * (1 + 1e-12) + 1e-12
    assert op.norm2(op.apply_L(f)) <= 2 * op.norm2(f) * (1 + 1e-12) + 1e-12


@pytest.mark.parametrize("g", [build_lattice(1, 32), build_lattice(2, 8), two_lattices_joined(6)])
def test_delta_alpha_keeps_spectrum_away_from_minus_one(g):
    sd = spectral_decomposition(MarkovOperator(g))
    assert sd.lambda_max < 2 - 1e-6
    assert sd.eigenvalues[0] == pytest.approx(0.0, abs=1e-10)


def test_gaussian_fit_ring(ring64):
    g, op = ring64
    fit = fit_gaussian_upper(op, 64)
    assert fit.max_violation <= 0
    assert 0.1 <= fit.c <= 2.0
    for n in (1, 7, 64):
        row = op.heat_kernel_row(0, n)
        assert np.all(row <= gaussian_bound(g, 0, n, fit.C, fit.c) * (1 + 1e-12))


def test_gaussian_fit_on_diagonal_and_zero_region():
    g = build_lattice(1, 32, boundary_mode="reflecting")
    op = MarkovOperator(g)
    fit = fit_gaussian_upper(op, 16, centers=[0, 10])
    assert math.isfinite(fit.C)
    row = op.heat_kernel_row(0, 4)
    assert np.all(row[g.dist[0] > 4] == 0)


def test_composite_fit(ring64):
    g, op = ring64
    fit = fit_composite_bound(op, 64, 1)
    assert fit.max_violation <= 0 and math.isfinite(fit.C)
    row = op.composite_kernel_row(0, 9, 1)
    assert np.all(np.abs(row) <= gaussian_bound(g, 0, 9, fit.C, fit.c, k=1) * (1 + 1e-12))


def test_holder_fit_ring():
    op = MarkovOperator(build_lattice(1, 32))
    fit = fit_holder_regularity(op, 32)
    assert 0 < fit.h <= 1 and math.isfinite(fit.C3)


def test_holder_fit_degrades_on_two_copies():
    small = fit_holder_regularity(MarkovOperator(two_lattices_joined(4)), 16, h_grid=(1.0,), C3_cap=1e12)
    large = fit_holder_regularity(MarkovOperator(two_lattices_joined(8)), 16, h_grid=(1.0,), C3_cap=1e12)
    assert large.C3 > small.C3


def test_heat_kernel_csv(tmp_path, ring64):
    g, op = ring64
    fit = fit_gaussian_upper(op, 8)
    path = write_heat_kernel_csv(op, 0, 8, fit, tmp_path / "hk.csv")
    rows = path.read_text().splitlines()
    assert rows[0] == "n,x,y,p_n,bound,slack"
    assert len(rows) == 1 + 8 * 64
    first = rows[1].split(",")
    assert float(first[3]) == pytest.approx(op.P[0, 0])
    slack = np.array([float(r.split(",")[5]) for r in rows[1:]])
    assert np.all(slack <= 0)
