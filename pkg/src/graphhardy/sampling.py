"""Deterministic random inputs for the verifiers.

All randomness flows from :func:`make_rng`, a counter-based Philox generator
seeded through :class:`numpy.random.SeedSequence`, so independent streams can
be split off reproducibly.
"""

from __future__ import annotations

import numpy as np

from .graph import Ball, WeightedGraph

__all__ = ["make_rng", "spawn", "random_function", "random_ball", "mean_zero",
           "FUNCTION_KINDS"]

FUNCTION_KINDS = ("gaussian", "sparse", "ball", "bump", "heavy")


def make_rng(seed) -> np.random.Generator:
    """Philox generator from an int seed or a :class:`~numpy.random.SeedSequence`."""
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    return np.random.Generator(np.random.Philox(ss))


def spawn(seed, n: int) -> list[np.random.Generator]:
    """``n`` independent generators derived from ``seed``."""
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    return [make_rng(child) for child in ss.spawn(n)]


def mean_zero(g: WeightedGraph, f: np.ndarray) -> np.ndarray:
    """Subtract the μ-weighted mean, making ``Σ f μ = 0``."""
    f = np.asarray(f, dtype=float)
    return f - np.sum(f * g.mu) / g.total_measure


def random_ball(g: WeightedGraph, rng: np.random.Generator, max_radius: int | None = None,
                min_radius: int = 1) -> Ball:
    if max_radius is None:
        max_radius = max(1, g.diameter // 4)
    max_radius = max(min_radius, max_radius)
    return Ball(int(rng.integers(g.n_vertices)), int(rng.integers(min_radius, max_radius + 1)))


def random_function(g: WeightedGraph, rng: np.random.Generator, kind: str | None = None,
                    mean_zero_: bool = False) -> np.ndarray:
    """Random vertex function drawn from a small mixture of shapes.

    Parameters
    ----------
    kind : {"gaussian", "sparse", "ball", "bump", "heavy"}, optional
        Shape; chosen uniformly when omitted.
    mean_zero_ : bool
        Project onto ``Σ f μ = 0`` (needed on finite graphs wherever
        constants must be excluded).
    """
    n = g.n_vertices
    if kind is None:
        kind = FUNCTION_KINDS[int(rng.integers(len(FUNCTION_KINDS)))]
    if kind == "gaussian":
        f = rng.standard_normal(n)
    elif kind == "sparse":
        f = np.zeros(n)
        k = int(rng.integers(1, max(2, n // 16) + 1))
        f[rng.choice(n, size=k, replace=False)] = rng.standard_normal(k)
    elif kind == "ball":
        b = random_ball(g, rng)
        f = b.mask(g) * rng.standard_normal()
        f = f + 0.1 * rng.standard_normal(n) * b.mask(g)
    elif kind == "bump":
        x = int(rng.integers(n))
        width = 1.0 + rng.random() * max(1.0, g.diameter / 4)
        f = np.exp(-(g.dist[x] / width) ** 2) * rng.choice([-1.0, 1.0])
    elif kind == "heavy":
        f = rng.standard_cauchy(n)
        f = np.clip(f, -1e3, 1e3)
    else:
        raise ValueError(f"unknown function kind {kind!r}")
    if mean_zero_:
        f = mean_zero(g, f)
    if not np.any(f):
        f = np.zeros(n)
        f[0] = 1.0
        if mean_zero_:
            f = mean_zero(g, f)
    return f
