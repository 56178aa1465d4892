"""The Markov operator P, the Laplacian L = I − P and heat-kernel bounds.

Kernel convention: ``P^n f(x) = Σ_y p_n(x, y) f(y)`` so ``p_n(x, ·)`` is
row ``x`` of the matrix ``P^n``.  Rows are produced by repeated sparse
products with a unit mass; dense powers are kept only as a test oracle.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
import scipy.sparse as sp

from .graph import WeightedGraph

__all__ = [
    "MarkovOperator",
    "GaussianFit",
    "HolderFit",
    "HolderFitError",
    "C_GRID",
    "fit_gaussian_upper",
    "fit_composite_bound",
    "fit_holder_regularity",
    "gaussian_bound",
    "write_heat_kernel_csv",
]

#: candidate Gaussian decay rates, ``{2^-k : k = 0..6}``
C_GRID = tuple(2.0 ** -k for k in range(7))


class MarkovOperator:
    """Row-stochastic transition operator of a weighted graph.

    Parameters
    ----------
    g : WeightedGraph

    Attributes
    ----------
    P : scipy.sparse.csr_matrix
        ``p(x, y) = ν(x, y) / μ(x)``.
    """

    def __init__(self, g: WeightedGraph):
        self.graph = g
        self.P = sp.csr_matrix(sp.diags(1.0 / g.mu) @ g.nu)
        self.PT = sp.csr_matrix(self.P.T)

    @property
    def n_vertices(self) -> int:
        return self.graph.n_vertices

    def apply_P(self, f: np.ndarray) -> np.ndarray:
        """``Pf(x) = Σ_y p(x, y) f(y)``; works column-wise on 2-D input."""
        return self.P @ np.asarray(f)

    def apply_L(self, f: np.ndarray) -> np.ndarray:
        f = np.asarray(f)
        return f - self.P @ f

    def apply_P_power(self, n: int, f: np.ndarray) -> np.ndarray:
        if n < 0:
            raise ValueError("power must be >= 0")
        out = np.asarray(f)
        for _ in range(n):
            out = self.P @ out
        return out

    def apply_L_power(self, k: int, f: np.ndarray) -> np.ndarray:
        """``(I − P)^k f`` by iteration; ``k = 0`` returns ``f`` unchanged."""
        if k < 0:
            raise ValueError("power must be >= 0")
        out = np.asarray(f)
        for _ in range(k):
            out = out - self.P @ out
        return out

    def heat_kernel_row(self, x: int, n: int) -> np.ndarray:
        """Row ``p_n(x, ·)`` (``n ≥ 0``; ``n = 0`` is the unit mass at ``x``)."""
        if n < 0:
            raise ValueError("n must be >= 0")
        row = np.zeros(self.n_vertices)
        row[x] = 1.0
        for _ in range(n):
            row = self.PT @ row
        return row

    def heat_kernel_table(self, x: int, horizon: int) -> np.ndarray:
        """Rows ``p_n(x, ·)`` for ``n = 0..horizon``, shape ``(horizon+1, n_vertices)``."""
        out = np.empty((horizon + 1, self.n_vertices))
        row = np.zeros(self.n_vertices)
        row[x] = 1.0
        out[0] = row
        for n in range(1, horizon + 1):
            row = self.PT @ row
            out[n] = row
        return out

    def composite_kernel_row(self, x: int, n: int, k: int) -> np.ndarray:
        """Row ``x`` of ``(I − P)^k P^n``."""
        if n < 0 or k < 0:
            raise ValueError("n and k must be >= 0")
        row = self.heat_kernel_row(x, n)
        for _ in range(k):
            row = row - self.PT @ row
        return row

    def dense_power(self, n: int) -> np.ndarray:
        """Dense ``P^n``; an oracle for small graphs only."""
        if self.n_vertices > 2048:
            raise ValueError("dense powers are limited to 2048 vertices")
        return np.linalg.matrix_power(self.P.toarray(), n)

    def inner(self, f: np.ndarray, h: np.ndarray) -> float:
        """``⟨f, h⟩`` in ``L²(Γ, μ)``."""
        return float(np.sum(np.asarray(f) * np.asarray(h) * self.graph.mu))

    def norm2(self, f: np.ndarray) -> float:
        return math.sqrt(max(self.inner(f, f), 0.0))


# ----------------------------------------------------------------------
# Gaussian upper bounds

@dataclass(frozen=True)
class GaussianFit:
    """Fitted constants of ``|p̃_{n,k}(x,y)| ≤ C μ(y) e^{-c d²/n} / (n^k μ(B(x,√n)))``.

    ``k = 0`` is the plain heat-kernel bound.  ``max_violation`` is the largest
    signed value of ``kernel − bound`` over the sampled range (``≤ 0`` means
    the fit holds everywhere).
    """

    C: float
    c: float
    max_violation: float
    worst: tuple[int, int, int]
    horizon: int
    k: int = 0
    candidates: dict = field(default_factory=dict, compare=False)


def gaussian_bound(g: WeightedGraph, x: int, n: int, C: float, c: float,
                   k: int = 0) -> np.ndarray:
    """The bound row ``y ↦ C μ(y) e^{-c d²(x,y)/n} / (n^k μ(B(x, ⌈√n⌉)))``."""
    V = g.ball_measure(x, math.ceil(math.sqrt(n)))
    d2 = g.dist[x].astype(float) ** 2
    return C * g.mu * np.exp(-c * d2 / n) / (V * n ** k)


def _default_centers(g: WeightedGraph, centers):
    if centers is not None:
        return [int(c) for c in centers]
    n = g.n_vertices
    if g.boundary_mode == "torus":
        return [0]
    if n <= 64:
        return list(range(n))
    return sorted(set(np.linspace(0, n - 1, 9).astype(int).tolist()))


def _fit_kernel_bound(op: MarkovOperator, horizon: int, k: int, centers,
                      c_grid=C_GRID) -> GaussianFit:
    g = op.graph
    centers = _default_centers(g, centers)
    c_grid = tuple(c_grid)
    best = {c: (0.0, (1, centers[0], centers[0])) for c in c_grid}
    for x in centers:
        row = np.zeros(op.n_vertices)
        row[x] = 1.0
        d2 = g.dist[x].astype(float) ** 2
        for n in range(1, horizon + 1):
            row = op.PT @ row
            kern = row
            for _ in range(k):
                kern = kern - op.PT @ kern
            V = g.ball_measure(x, math.ceil(math.sqrt(n)))
            base = np.abs(kern) * V * n ** k / g.mu
            for c in c_grid:
                q = np.zeros_like(base)
                nz = base > 0
                q[nz] = base[nz] * np.exp(c * d2[nz] / n)
                i = int(np.argmax(q))
                if q[i] > best[c][0]:
                    best[c] = (float(q[i]), (n, x, i))
    score = {c: best[c][0] * math.exp(1.0 / c) for c in c_grid}
    c_star = min(c_grid, key=lambda c: (score[c], -c))
    C, worst = best[c_star]
    # independent second pass: signed slack of the chosen bound
    viol = -math.inf
    for x in centers:
        row = np.zeros(op.n_vertices)
        row[x] = 1.0
        for n in range(1, horizon + 1):
            row = op.PT @ row
            kern = row
            for _ in range(k):
                kern = kern - op.PT @ kern
            slack = np.abs(kern) - gaussian_bound(g, x, n, C, c_star, k)
            # relative rounding of the ratio test
            slack -= 1e-12 * np.abs(kern)
            viol = max(viol, float(np.max(slack)))
    return GaussianFit(C=C, c=c_star, max_violation=viol, worst=worst, horizon=horizon,
                       k=k, candidates={c: best[c][0] for c in c_grid})


def fit_gaussian_upper(op: MarkovOperator, horizon: int, centers: Sequence[int] | None = None,
                       c_grid=C_GRID) -> GaussianFit:
    """Fit ``p_n(x, y) ≤ C μ(y) e^{-c d²/n} / μ(B(x, √n))`` for ``n ≤ horizon``.

    For each candidate ``c`` the least valid ``C`` is computed exactly over all
    targets ``y`` and sampled base points; the reported pair minimises
    ``C e^{1/c}``.

    Parameters
    ----------
    op : MarkovOperator
    horizon : int
        Largest ``n``.  On a torus keep it at most ``(side / 4)²``.
    centers : sequence of int, optional
        Base points ``x``.  Default: vertex 0 on a torus (all vertices are
        equivalent), otherwise up to nine spread-out vertices.
    """
    return _fit_kernel_bound(op, horizon, 0, centers, c_grid)


def fit_composite_bound(op: MarkovOperator, horizon: int, k: int,
                        centers: Sequence[int] | None = None, c_grid=C_GRID) -> GaussianFit:
    """Same as :func:`fit_gaussian_upper` for the kernel of ``(I − P)^k P^n``."""
    return _fit_kernel_bound(op, horizon, k, centers, c_grid)


# ----------------------------------------------------------------------
# Hölder regularity of the kernel

@dataclass(frozen=True)
class HolderFit:
    """Fitted ``(C₃, c₃, h)`` for the kernel regularity estimate."""

    C3: float
    c3: float
    h: float
    worst: tuple[int, int, int, int]
    horizon: int
    table: dict = field(default_factory=dict, compare=False)


class HolderFitError(RuntimeError):
    """No ``(h, C₃)`` pair on the grid stays below the cap."""

    def __init__(self, message: str, worst: tuple, table: dict):
        super().__init__(message)
        self.worst = worst
        self.table = table


def fit_holder_regularity(op: MarkovOperator, horizon: int, centers: Sequence[int] | None = None,
                          h_grid: Sequence[float] = (1.0, 0.9, 0.75, 0.5, 0.25, 0.1),
                          c_grid=C_GRID, C3_cap: float = 1e3) -> HolderFit:
    """Fit ``|p_n(y,x) − p_n(y₀,x)| ≤ C₃ (d(y,y₀)/√n)^h μ(x) e^{-c₃ d²(x,y₀)/n} / μ(B(x,√n))``.

    All tuples with ``0 < d(y, y₀) ≤ √n`` are scanned for each base point
    ``x`` and ``n ≤ horizon``.  The largest ``h`` on ``h_grid`` whose best
    ``C₃`` (over ``c₃`` on ``c_grid``, ranked by ``C₃ e^{1/c₃}``) does not
    exceed ``C3_cap`` is returned.

    Raises
    ------
    HolderFitError
        When no exponent fits; carries the worst tuple ``(n, x, y₀, y)``.
    """
    g = op.graph
    centers = _default_centers(g, centers)
    D = g.dist
    h_grid = sorted(h_grid, reverse=True)
    best = {(h, c): (0.0, None) for h in h_grid for c in c_grid}
    for x in centers:
        col = np.zeros(op.n_vertices)
        col[x] = 1.0
        for n in range(1, horizon + 1):
            col = op.P @ col                      # y -> p_n(y, x)
            s = math.sqrt(n)
            y0s, ys = np.nonzero((D > 0) & (D <= s + 1e-12))
            if y0s.size == 0:
                continue
            lhs = np.abs(col[ys] - col[y0s])
            V = g.ball_measure(x, math.ceil(s))
            dd = D[y0s, ys] / s
            dx2 = D[x, y0s].astype(float) ** 2 / n
            base = lhs * V / g.mu[x]
            for h in h_grid:
                bh = base / dd ** h
                for c in c_grid:
                    q = np.zeros_like(bh)
                    nz = bh > 0
                    q[nz] = bh[nz] * np.exp(c * dx2[nz])
                    i = int(np.argmax(q))
                    if q[i] > best[(h, c)][0]:
                        best[(h, c)] = (float(q[i]), (n, x, int(y0s[i]), int(ys[i])))
    table = {}
    for h in h_grid:
        c_star = min(c_grid, key=lambda c: (best[(h, c)][0] * math.exp(1 / c), -c))
        table[h] = (best[(h, c_star)][0], c_star, best[(h, c_star)][1])
    for h in h_grid:
        C3, c3, worst = table[h]
        if C3 <= C3_cap:
            return HolderFit(C3=C3, c3=c3, h=h, worst=worst or (0, 0, 0, 0), horizon=horizon,
                             table=table)
    h_last = h_grid[-1]
    raise HolderFitError(f"no Hölder exponent fits with C3 <= {C3_cap}", table[h_last][2], table)


def write_heat_kernel_csv(op: MarkovOperator, x: int, horizon: int, fit: GaussianFit,
                          path: str | Path) -> Path:
    """Export ``n, x, y, p_n, bound, slack`` rows (``slack = p_n − bound``)."""
    path = Path(path)
    g = op.graph
    tmp = path.with_suffix(path.suffix + ".tmp")
    with open(tmp, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["n", "x", "y", "p_n", "bound", "slack"])
        table = op.heat_kernel_table(x, horizon)
        for n in range(1, horizon + 1):
            b = gaussian_bound(g, x, n, fit.C, fit.c)
            for y in range(op.n_vertices):
                w.writerow([n, x, y, repr(float(table[n, y])), repr(float(b[y])),
                            repr(float(table[n, y] - b[y]))])
    tmp.replace(path)
    return path
