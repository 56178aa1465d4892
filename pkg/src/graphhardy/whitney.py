"""Density sets and Whitney-type covers of proper subsets of a graph."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .graph import WeightedGraph

__all__ = ["global_density_set", "WhitneyCover", "whitney_cover", "WhitneyError"]


class WhitneyError(ValueError):
    """Invalid set passed to :func:`whitney_cover`."""


def global_density_set(g: WeightedGraph, F: np.ndarray, gamma: float,
                       rtol: float = 1e-12) -> np.ndarray:
    """Vertices where ``F`` has density at least ``γ`` in every ball around them.

    ``F*_γ = {x : μ(F ∩ B(x, r)) / μ(B(x, r)) ≥ γ for all r}``.  The set is
    computed twice – from the densities of ``F`` and as the complement of
    ``{M(χ_{F^c}) > 1 − γ}`` – and the two results are required to agree.

    Parameters
    ----------
    F : ndarray of bool
        Membership mask.
    gamma : float
        Density threshold in ``(0, 1)``.
    rtol : float
        Tie tolerance applied identically to both characterisations.

    Returns
    -------
    ndarray of bool
    """
    if not 0 < gamma < 1:
        raise ValueError("gamma must lie in (0, 1)")
    F = np.asarray(F, dtype=bool)
    V = g.ball_measures
    dens = g.ball_sums(F * g.mu) / V
    direct = np.all(dens >= gamma - rtol, axis=1)
    maximal = (g.ball_sums((~F) * g.mu) / V).max(axis=1)
    via_max = ~(maximal > 1 - gamma + rtol)
    if not np.array_equal(direct, via_max):
        bad = int(np.flatnonzero(direct != via_max)[0])
        raise RuntimeError(f"density characterisations disagree at vertex {bad}")
    return direct


@dataclass
class WhitneyCover:
    """Ball cover of ``Ω`` with a subordinate partition of unity.

    Attributes
    ----------
    omega : ndarray of bool
    centers : ndarray of int
    radii : ndarray of float
        ``r_n = d(x_n, Ω^c) / 10`` (real-valued; balls use ``⌈r⌉``).
    phi : ndarray, shape (n_balls, n_vertices)
        Partition functions ``φ_n``.
    overlap : int
        Bounded-overlap constant ``𝒞`` actually achieved.
    """

    omega: np.ndarray
    centers: np.ndarray
    radii: np.ndarray
    phi: np.ndarray
    overlap: int

    def __len__(self) -> int:
        return len(self.centers)

    def verify(self, g: WeightedGraph, atol: float = 1e-12) -> dict:
        """Re-check all structural properties; returns a dict of booleans."""
        D = g.dist[self.centers]
        R = np.ceil(self.radii - 1e-12).astype(int)
        balls = D < np.maximum(R, 1)[:, None]
        quarter = D < np.maximum(np.ceil(self.radii / 4 - 1e-12), 1)[:, None]
        double = D < np.maximum(np.ceil(2 * self.radii - 1e-12), 1)[:, None]
        five = D < np.maximum(np.ceil(5 * self.radii - 1e-12), 1)[:, None]
        covers = np.array_equal(balls.any(axis=0), self.omega)
        disjoint = bool(np.all(quarter.sum(axis=0) <= 1))
        meets = (five.astype(int) @ five.T.astype(int)) > 0
        overlap_ok = bool(np.all(meets.sum(axis=1) <= self.overlap))
        support_ok = bool(np.all((self.phi > 0) <= double))
        lower_ok = bool(np.all(self.phi[balls] >= 1.0 / self.overlap - atol))
        partition_ok = bool(np.allclose(self.phi.sum(axis=0), self.omega.astype(float),
                                        rtol=0, atol=atol))
        return {"covers": covers, "quarter_disjoint": disjoint, "bounded_overlap": overlap_ok,
                "support": support_ok, "lower_bound": lower_ok, "partition": partition_ok}


def whitney_cover(g: WeightedGraph, omega: np.ndarray) -> WhitneyCover:
    """Greedy Whitney cover of a nonempty proper subset ``Ω``.

    Candidates ``x ∈ Ω`` are visited by decreasing ``d(x, Ω^c)`` (ties by
    vertex id) and accepted when ``B(x, r_x/4)`` misses every accepted
    quarter-ball, with ``r_x = d(x, Ω^c)/10``.  The partition functions are
    ``φ_n = hat_n / Σ_m hat_m`` with ``hat_n(y) = clip(2 − d(x_n, y)/r_n, 0, 1)``,
    which equals 1 on ``B(x_n, r_n)`` and vanishes off ``B(x_n, 2r_n)``.

    Raises
    ------
    WhitneyError
        If ``Ω`` is empty or the whole graph.
    """
    omega = np.asarray(omega, dtype=bool)
    if not omega.any():
        raise WhitneyError("Ω is empty")
    if omega.all():
        raise WhitneyError("Ω = Γ: the distance to the complement is undefined")
    dc = g.dist[:, ~omega].min(axis=1)
    cand = np.flatnonzero(omega)
    order = cand[np.lexsort((cand, -dc[cand]))]
    taken = np.zeros(g.n_vertices, dtype=bool)
    centers = []
    for x in order:
        rq = max(1, math.ceil(dc[x] / 40 - 1e-12))
        q = g.dist[x] < rq
        if not (taken & q).any():
            taken |= q
            centers.append(int(x))
    centers = np.array(centers, dtype=np.int64)
    radii = dc[centers] / 10.0
    D = g.dist[centers].astype(float)
    hat = np.clip(2.0 - D / radii[:, None], 0.0, 1.0)
    hat[D >= 2 * radii[:, None]] = 0.0
    total = hat.sum(axis=0)
    phi = np.divide(hat, total, out=np.zeros_like(hat), where=total > 0)
    five = g.dist[centers] < np.maximum(np.ceil(5 * radii - 1e-12), 1)[:, None]
    meets = (five.astype(int) @ five.T.astype(int)) > 0
    overlap = int(max(meets.sum(axis=1).max(), (hat > 0).sum(axis=0).max()))
    return WhitneyCover(omega=omega, centers=centers, radii=radii, phi=phi, overlap=overlap)
