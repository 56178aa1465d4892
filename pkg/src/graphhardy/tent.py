"""Cones, tents, the area functional and the square functions on Γ × ℕ₊.

Tent functions live on ``Γ × {1, …, K}`` and are stored densely as arrays of
shape ``(rows, K)``; column ``k − 1`` holds level ``k``.  Only finitely many
levels are ever nonzero, so every sum here is finite.

Two normalisations of the conical square average appear in practice:

``"vertex"``
    ``Σ_{d(y,x) < βk} |F(y,k)|² μ(y) / (k μ(B(x, k)))`` – the ball is centred
    at the cone vertex ``x``.
``"point"``
    ``Σ_{d(y,x) < βk} |F(y,k)|² μ(y) / (k μ(B(y, k)))`` – the ball is centred
    at the integration point ``y``.

The area functional defaults to ``"vertex"`` and ``S_L`` to ``"point"``;
both accept either.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .eigen import MAX_DENSE_VERTICES, spectral_decomposition
from .graph import Ball, WeightedGraph
from .markov import MarkovOperator
from .varexp import ExponentFunction, aggregate_A, luxemburg_norm

__all__ = [
    "TentFunction",
    "cone",
    "tent",
    "tent_region_mask",
    "area_functional",
    "tent_norm",
    "sl_tent_function",
    "square_function_SL",
    "square_function_GN",
    "radial_maximal",
    "hardy_norm",
    "aggregate_A",
    "read_tent_csv",
    "write_tent_csv",
    "SL_VARIANTS",
]

#: shift of the heat power inside ``S_L``: ``⌊k/2⌋`` or ``⌊(k−1)/2⌋``
SL_VARIANTS = ("half", "half_minus")


def _heat_power(k: int, variant: str) -> int:
    if variant == "half":
        return k // 2
    if variant == "half_minus":
        return (k - 1) // 2
    raise ValueError(f"unknown variant {variant!r}; expected one of {SL_VARIANTS}")


@dataclass
class TentFunction:
    """Finitely supported function on ``Γ × {1..K}``.

    Parameters
    ----------
    values : ndarray, shape (rows, K)
        ``values[i, k-1] = F(vertices[i], k)``.
    n_vertices : int
        Size of the underlying graph.
    vertices : ndarray of int, optional
        Vertex id of each row; defaults to ``arange(n_vertices)``.
    """

    values: np.ndarray
    n_vertices: int
    vertices: np.ndarray | None = None

    def __post_init__(self):
        self.values = np.atleast_2d(np.asarray(self.values, dtype=float))
        if self.vertices is None:
            if self.values.shape[0] != self.n_vertices:
                raise ValueError("values must have one row per vertex when vertices is omitted")
        else:
            self.vertices = np.asarray(self.vertices, dtype=np.int64)
            if self.vertices.shape[0] != self.values.shape[0]:
                raise ValueError("one vertex id per row is required")

    @property
    def K(self) -> int:
        return self.values.shape[1]

    @classmethod
    def zeros(cls, n_vertices: int, K: int) -> "TentFunction":
        return cls(np.zeros((n_vertices, K)), n_vertices)

    def dense(self) -> np.ndarray:
        """Full ``(n_vertices, K)`` array."""
        if self.vertices is None:
            return self.values
        out = np.zeros((self.n_vertices, self.K))
        np.add.at(out, self.vertices, self.values)
        return out

    def support(self) -> set[tuple[int, int]]:
        rows, cols = np.nonzero(self.values)
        ids = rows if self.vertices is None else self.vertices[rows]
        return {(int(v), int(c) + 1) for v, c in zip(ids, cols)}

    def scale(self, t: float) -> "TentFunction":
        return TentFunction(self.values * t, self.n_vertices, self.vertices)

    def __add__(self, other: "TentFunction") -> "TentFunction":
        K = max(self.K, other.K)
        a = np.zeros((self.n_vertices, K))
        a[:, : self.K] += self.dense()
        a[:, : other.K] += other.dense()
        return TentFunction(a, self.n_vertices)


# ----------------------------------------------------------------------
# geometry

def cone(g: WeightedGraph, x: int, beta: float = 1.0, K: int = 1) -> set[tuple[int, int]]:
    """``Υ_β(x) ∩ {k ≤ K} = {(y, k) : d(y, x) < βk}``."""
    if K < 1:
        raise ValueError("K must be >= 1")
    d = g.dist[x]
    return {(int(y), k) for k in range(1, K + 1) for y in np.flatnonzero(d < beta * k)}


def tent(g: WeightedGraph, b: Ball) -> set[tuple[int, int]]:
    """``T(B) = {(x, k) : k ≥ 1, d(x_B, x) ≤ r_B − k}``."""
    d = g.dist[b.center]
    return {(int(y), k) for k in range(1, b.radius + 1) for y in np.flatnonzero(d <= b.radius - k)}


def tent_region_mask(g: WeightedGraph, omega: np.ndarray, beta: float, K: int) -> np.ndarray:
    """Indicator of ``T_β(Ω) = (∪_{x ∉ Ω} Υ_β(x))^c`` on ``Γ × {1..K}``.

    ``(y, k)`` lies in the tent exactly when ``d(y, x) ≥ βk`` for every
    ``x ∉ Ω``, i.e. ``k ≤ d(y, Ω^c) / β``.  Computed from the definition as
    a set complement; shape ``(n_vertices, K)``.
    """
    omega = np.asarray(omega, dtype=bool)
    levels = np.arange(1, K + 1)
    if omega.all():
        return np.ones((g.n_vertices, K), dtype=bool)
    dc = g.dist[:, ~omega].min(axis=1)          # d(y, Ω^c)
    in_some_cone = dc[:, None] < beta * levels[None, :]
    return ~in_some_cone


# ----------------------------------------------------------------------
# area functional

def _level_weights(g, values, vertices, k_levels):
    """``|F(y,k)|² μ(y) / k`` as a dense ``(n, len(k_levels))`` array."""
    if vertices is None:
        return values ** 2 * g.mu[:, None] / k_levels[None, :]
    # repeated vertex rows add up before squaring, as in ``TentFunction.dense``
    uniq, inv = np.unique(vertices, return_inverse=True)
    summed = np.zeros((uniq.size, values.shape[1]))
    np.add.at(summed, inv, values)
    out = np.zeros((g.n_vertices, values.shape[1]))
    out[uniq] = summed ** 2 * g.mu[uniq][:, None] / k_levels[None, :]
    return out


def area_functional(g: WeightedGraph, F: TentFunction, beta: float = 1.0,
                    normalization: str = "vertex") -> np.ndarray:
    """Conical square function ``𝒜^β F``.

    Parameters
    ----------
    g : WeightedGraph
    F : TentFunction
    beta : float
        Cone aperture, ``β ≥ 1``.
    normalization : {"vertex", "point"}
        Centre of the normalising ball (see the module docstring).

    Returns
    -------
    ndarray
        ``𝒜^β F(x)`` for every vertex.

    Notes
    -----
    Levels ``k > diameter`` see the whole graph in every cone and in every
    normalising ball, so they contribute the same constant to every vertex;
    they are summed without the ``O(n²)`` spatial pass.
    """
    if beta < 1:
        raise ValueError("beta must be >= 1")
    if normalization not in ("vertex", "point"):
        raise ValueError("normalization must be 'vertex' or 'point'")
    n = g.n_vertices
    K = F.K
    out = np.zeros(n)
    if K == 0:
        return out
    k_near = min(K, g.diameter + 1)
    levels = np.arange(1, k_near + 1, dtype=float)
    W = _level_weights(g, F.values[:, :k_near], F.vertices, levels)
    D = g.dist
    for j, k in enumerate(levels):
        col = W[:, j]
        if not col.any():
            continue
        if normalization == "point":
            col = col / g.ball_measure(np.arange(n), k)
            out += (D < beta * k) @ col
        else:
            out += ((D < beta * k) @ col) / g.ball_measure(np.arange(n), k)
    if K > k_near:
        vals = F.values[:, k_near:]
        far = np.arange(k_near + 1, K + 1, dtype=float)
        out += float(_level_weights(g, vals, F.vertices, far).sum()) / g.total_measure
    return np.sqrt(out)


def tent_norm(g: WeightedGraph, p: ExponentFunction, F: TentFunction) -> float:
    """``‖F‖_{T_2^{p(·)}} = ‖𝒜F‖_{p(·)}``."""
    return luxemburg_norm(p, area_functional(g, F))


# ----------------------------------------------------------------------
# square functions

def sl_tent_function(op: MarkovOperator, f: np.ndarray, K: int,
                     variant: str = "half") -> TentFunction:
    """``F(y, k) = k (I − P) P^{m(k)} f(y)`` for ``k = 1..K`` (``m(k) = ⌊k/2⌋`` by default)."""
    f = np.asarray(f, dtype=float)
    n = f.size
    out = np.empty((n, K))
    cur_m, u = 0, f.copy()
    for k in range(1, K + 1):
        m = _heat_power(k, variant)
        while cur_m < m:
            u = op.P @ u
            cur_m += 1
        out[:, k - 1] = k * (u - op.P @ u)
    return TentFunction(out, n)


def _tail_pairs(rho, m1, c):
    """``Σ_{m ≥ m1} (4m + c) ρ^m`` for ``0 ≤ ρ < 1`` (elementwise)."""
    rho = np.asarray(rho, dtype=float)
    one = 1.0 - rho
    pw = rho ** m1
    s0 = pw / one
    s1 = pw * (m1 * one + rho) / one ** 2
    return 4.0 * s1 + c * s0


def square_function_SL(g: WeightedGraph, op: MarkovOperator, f: np.ndarray, K: int | None = None,
                       normalization: str = "point", variant: str = "half",
                       beta: float = 1.0) -> np.ndarray:
    """Conical square function ``S_L f`` of ``F(y,k) = k(I − P)P^{⌊k/2⌋}f(y)``.

    Parameters
    ----------
    K : int, optional
        Level cap.  When omitted the series is summed to infinity: levels up
        to ``diameter + 1`` are accumulated directly and the remaining tail,
        which no longer depends on ``x``, is evaluated in closed form from the
        eigendecomposition of ``L`` (graphs up to 2048 vertices).  On a
        finite graph the infinite sum converges for every ``f``; constants
        contribute nothing.
    normalization : {"point", "vertex"}
    variant : {"half", "half_minus"}
        Heat power ``⌊k/2⌋`` or ``⌊(k−1)/2⌋``.
    beta : float
        Cone aperture.
    """
    if normalization not in ("vertex", "point"):
        raise ValueError("normalization must be 'vertex' or 'point'")
    f = np.asarray(f, dtype=float)
    n = g.n_vertices
    exact_tail = K is None
    if exact_tail:
        if n > MAX_DENSE_VERTICES:
            raise ValueError("an explicit level cap K is required above "
                             f"{MAX_DENSE_VERTICES} vertices")
        k_near = g.diameter + 1
        # align the cut so the tail starts at the first level of a pair
        if variant == "half" and k_near % 2 == 0:
            k_near += 1
        if variant == "half_minus" and k_near % 2 == 1:
            k_near += 1
    else:
        k_near = int(K)
    D = g.dist
    xs = np.arange(n)
    acc = np.zeros(n)
    far = 0.0
    cur_m, u = 0, f.copy()
    for k in range(1, k_near + 1):
        m = _heat_power(k, variant)
        while cur_m < m:
            u = op.P @ u
            cur_m += 1
        Fk = k * (u - op.P @ u)
        w = Fk ** 2 * g.mu / k
        if k <= g.diameter:
            if normalization == "point":
                acc += (D < beta * k) @ (w / g.ball_measure(xs, k))
            else:
                acc += ((D < beta * k) @ w) / g.ball_measure(xs, k)
        else:
            far += float(w.sum()) / g.total_measure
    if exact_tail:
        sd = spectral_decomposition(op)
        lam = sd.eigenvalues
        c2 = sd.coefficients(f) ** 2
        keep = lam > 0
        rho = (1.0 - lam[keep]) ** 2
        if variant == "half":
            m1, cst = (k_near + 1) // 2, 1.0
        else:
            m1, cst = k_near // 2, 3.0
        tail = np.sum(lam[keep] ** 2 * c2[keep] * _tail_pairs(rho, m1, cst))
        far += float(tail) / g.total_measure
    return np.sqrt(np.maximum(acc + far, 0.0))


def _eulerian_polylog(s: int, z: np.ndarray) -> np.ndarray:
    """``Σ_{k≥1} k^s z^k`` for integer ``s ≥ 0`` and ``|z| < 1``."""
    z = np.asarray(z, dtype=float)
    if s == 0:
        return z / (1.0 - z)
    # Eulerian numbers A(s, m), m = 0..s-1
    A = [1]
    for t in range(2, s + 1):
        A = [(m + 1) * (A[m] if m < len(A) else 0) + (t - m) * (A[m - 1] if m >= 1 else 0)
             for m in range(t)]
    poly = np.zeros_like(z)
    for coef in reversed(A):
        poly = poly * z + coef
    return z * poly / (1.0 - z) ** (s + 1)


def square_function_GN(g: WeightedGraph, op: MarkovOperator, f: np.ndarray, N: int,
                       K: int | None = None) -> np.ndarray:
    """Vertical square function ``G_{L,N}f(x) = (Σ_{k≥1} |k^N L^N P^k f(x)|² / k)^{1/2}``.

    With ``K`` given the sum is truncated at ``k ≤ K`` and evaluated by
    iteration; otherwise it is summed exactly through the eigendecomposition
    using ``Σ_k k^{2N-1} z^k`` in closed form.
    """
    if N < 1:
        raise ValueError("N must be >= 1")
    f = np.asarray(f, dtype=float)
    if K is not None:
        u = op.apply_L_power(N, f)
        acc = np.zeros_like(f)
        for k in range(1, K + 1):
            u = op.P @ u
            acc += (k ** N * u) ** 2 / k
        return np.sqrt(acc)
    sd = spectral_decomposition(op)
    lam = sd.eigenvalues
    keep = lam > 0
    a = lam[keep] ** N * sd.coefficients(f)[keep]
    th = 1.0 - lam[keep]
    W = _eulerian_polylog(2 * N - 1, np.outer(th, th))
    B = sd.eigenvectors[:, keep] * a[None, :]
    return np.sqrt(np.maximum(np.einsum("xi,ij,xj->x", B, W, B), 0.0))


def radial_maximal(g: WeightedGraph, op: MarkovOperator, f: np.ndarray,
                   K: int | None = None) -> np.ndarray:
    """``M_+ f(x) = max_{0 ≤ k ≤ K} |P^k f(x)|``; ``K`` defaults to ``max(64, 4 diam²)``."""
    if K is None:
        K = max(64, 4 * g.diameter ** 2)
    u = np.asarray(f, dtype=float)
    out = np.abs(u)
    for _ in range(K):
        u = op.P @ u
        np.maximum(out, np.abs(u), out=out)
    return out


def hardy_norm(g: WeightedGraph, p: ExponentFunction, op: MarkovOperator, f: np.ndarray,
               K: int | None = None) -> float:
    """``‖f‖_{H^{p(·)}_L} = ‖S_L f‖_{p(·)}``."""
    return luxemburg_norm(p, square_function_SL(g, op, f, K))


# ----------------------------------------------------------------------
# I/O

def write_tent_csv(F: TentFunction, path: str | Path) -> Path:
    """Write nonzero entries as ``x k value`` rows."""
    path = Path(path)
    tmp = path.with_suffix(path.suffix + ".tmp")
    rows, cols = np.nonzero(F.values)
    ids = rows if F.vertices is None else F.vertices[rows]
    with open(tmp, "w", newline="") as fh:
        w = csv.writer(fh, delimiter=" ")
        w.writerow(["x", "k", "value"])
        for v, c, r in zip(ids, cols, rows):
            w.writerow([int(v), int(c) + 1, repr(float(F.values[r, c]))])
    tmp.replace(path)
    return path


def read_tent_csv(path: str | Path, n_vertices: int, K: int | None = None) -> TentFunction:
    entries = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            parts = line.split()
            if not parts or parts[0] == "x":
                continue
            try:
                entries.append((int(parts[0]), int(parts[1]), float(parts[2])))
            except (ValueError, IndexError):
                raise ValueError(f"{path}:{lineno}: expected 'x k value'") from None
    kmax = max((k for _, k, _ in entries), default=1)
    K = kmax if K is None else K
    out = np.zeros((n_vertices, K))
    for x, k, v in entries:
        out[x, k - 1] += v
    return TentFunction(out, n_vertices)
