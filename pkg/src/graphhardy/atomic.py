"""Atomic and molecular decompositions.

This module contains

* the constructive atomic decomposition of tent functions (stopping-time sets
  ``O_k = {𝒜F > 2^k}``, their density enlargements ``Ω_k``, Whitney covers
  and the telescoping split of ``F`` across the tents ``T_{1/2}(Ω_k)``);
* the reconstruction operator ``Π_M`` and the Calderón-type representation
  ``f = Σ_k c_{k,M} L^M P^k f``;
* the Hardy-space pipeline turning a function into ``(r, p(·), M)``-atoms via
  ``F(y, k) = k L P^{⌊k/2⌋} f(y)``;
* certificates for tent atoms, Hardy atoms, molecules and cancellative
  ``(2, p(·))``-atoms, with verifiers that re-check every inequality;
* empirical verifiers for the synthesis and norm-equivalence estimates.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.special import comb
from scipy.stats import nbinom

from .eigen import MAX_DENSE_VERTICES, spectral_decomposition
from .graph import Ball, WeightedGraph, check_poincare, fit_doubling
from .markov import MarkovOperator, fit_holder_regularity
from .results import HypothesisError, VerificationResult, max_ratio
from .sampling import mean_zero, random_ball, random_function
from .tent import (TentFunction, area_functional, radial_maximal, sl_tent_function,
                   square_function_SL, tent_region_mask)
from .varexp import (ExponentFunction, aggregate_A, ball_indicator_norm, hl_maximal,
                     luxemburg_norm, luxemburg_norm_batch)
from .whitney import global_density_set, whitney_cover

__all__ = [
    "C_ETA",
    "coefficients_c",
    "coefficient_table",
    "pi_M",
    "PiResult",
    "verify_representation",
    "representation_residual_oracle",
    "level_cap_for",
    "level_cap_for_function",
    "TentAtom",
    "TentDecomposition",
    "tent_atomic_decomposition",
    "random_tent_atom",
    "HardyAtomCertificate",
    "HardyDecomposition",
    "hardy_atomic_decomposition",
    "verify_hardy_atom",
    "random_hardy_atom",
    "MoleculeCertificate",
    "MoleculeReport",
    "molecule_from_tent_atom",
    "verify_molecule",
    "SimpleAtomCertificate",
    "random_simple_atom",
    "verify_simple_atom",
    "verify_atom_synthesis",
    "verify_molecular_synthesis",
    "verify_mplus_bound",
    "verify_simple_atom_bound",
    "verify_equal_lebesgue",
    "verify_pi_M_bound",
]

#: aperture parameter η = 1/2 gives C_η = 2 + 12/(1 − η)
ETA = 0.5
GAMMA = 0.5
C_ETA = 2.0 + 12.0 / (1.0 - ETA)


# ----------------------------------------------------------------------
# coefficients and the reconstruction operator

def coefficients_c(k: int, N: int) -> int:
    """``c_{k,N}`` with ``c_{k,1} = 1`` and ``c_{k,N+1} = Σ_{j ≤ k} c_{j,N}``.

    The closed form is the binomial coefficient ``C(k + N − 1, N − 1)``;
    the result is an exact Python integer.
    """
    if k < 0 or N < 1:
        raise ValueError("need k >= 0 and N >= 1")
    return math.comb(k + N - 1, N - 1)


def coefficient_table(K: int, N: int) -> list[list[int]]:
    """Rows ``[c_{0,n}, …, c_{K,n}]`` for ``n = 1..N`` built by the recursion itself."""
    rows = [[1] * (K + 1)]
    for _ in range(1, N):
        prev = rows[-1]
        acc, row = 0, []
        for v in prev:
            acc += v
            row.append(acc)
        rows.append(row)
    return rows


def _pi_weights(K: int, M: int) -> np.ndarray:
    """``c_{ℓ,M+1} / (ℓ + 1)`` for ``ℓ = 0..K-1`` as floats."""
    ell = np.arange(K, dtype=float)
    return comb(ell + M, M) / (ell + 1.0)


@dataclass
class PiResult:
    """``Π_M F`` together with its witness ``b`` (``Π_M F = L^M b``).

    ``powers[k]`` is ``L^k b`` for ``k = 0..M``.
    """

    a: np.ndarray
    b: np.ndarray
    powers: list
    method: str


def pi_M(g: WeightedGraph, op: MarkovOperator, F: TentFunction, M: int,
         method: str = "auto") -> PiResult:
    """Reconstruction operator ``Π_M F = Σ_k c_{k,M+1}/(k+1) L^M P^{⌊k/2⌋} F(·, k+1)``.

    Parameters
    ----------
    method : {"auto", "sparse", "spectral"}
        ``"sparse"`` evaluates the witness ``b = Σ_k c_{k,M+1}/(k+1)
        P^{⌊k/2⌋} F(·, k+1)`` by a Horner scheme in ``P`` and applies ``L``
        ``M`` times; supports are exact.  ``"spectral"`` runs the same
        Horner scheme on eigen-coefficients, which avoids the cancellation
        in ``L^M b`` when ``b`` is huge (long level ranges on small spectral
        gaps).  ``"auto"`` picks ``"spectral"`` when the level range exceeds
        ``2 (diameter + 1)`` and the graph is small enough.

    Returns
    -------
    PiResult
    """
    if M < 1:
        raise ValueError("M must be >= 1")
    n = g.n_vertices
    Fd = F.dense()
    nz = np.flatnonzero(np.any(Fd != 0, axis=0))
    if nz.size == 0:
        z = np.zeros(n)
        return PiResult(z, z.copy(), [z.copy() for _ in range(M + 1)], "zero")
    K = int(nz[-1]) + 1
    w = _pi_weights(K, M)
    if method == "auto":
        method = "spectral" if (K > 2 * (g.diameter + 1) and n <= MAX_DENSE_VERTICES) else "sparse"
    mmax = (K - 1) // 2
    if method == "sparse":
        acc = np.zeros(n)
        for m in range(mmax, -1, -1):
            acc = op.P @ acc
            acc += w[2 * m] * Fd[:, 2 * m]
            if 2 * m + 1 < K:
                acc += w[2 * m + 1] * Fd[:, 2 * m + 1]
        powers = [acc]
        for _ in range(M):
            powers.append(powers[-1] - op.P @ powers[-1])
        return PiResult(powers[-1], acc, powers, "sparse")
    if method != "spectral":
        raise ValueError(f"unknown method {method!r}")
    sd = spectral_decomposition(op)
    theta = 1.0 - sd.eigenvalues
    acc = np.zeros(n)
    chunk = 2048
    for hi in range(mmax + 1, 0, -chunk):
        lo = max(0, hi - chunk)
        ms = np.arange(lo, hi)
        H = w[2 * ms] * Fd[:, 2 * ms]
        odd = 2 * ms + 1 < K
        H[:, odd] += w[2 * ms[odd] + 1] * Fd[:, 2 * ms[odd] + 1]
        Hh = sd.coefficients(H)
        for j in range(Hh.shape[1] - 1, -1, -1):
            acc = theta * acc + Hh[:, j]
    lam = sd.eigenvalues
    powers = [sd.synthesize(lam ** k * acc) for k in range(M + 1)]
    return PiResult(powers[-1], powers[0], powers, "spectral")


def representation_residual_oracle(lam: float, M: int, Ks: Sequence[int]) -> np.ndarray:
    """``|1 − λ^M Σ_{k<K} c_{k,M}(1 − λ)^k|`` for each ``K`` (scalar series oracle)."""
    Ks = np.asarray(Ks, dtype=int)
    kmax = int(Ks.max())
    k = np.arange(kmax, dtype=float)
    terms = comb(k + M - 1, M - 1) * (1.0 - lam) ** k * lam ** M
    partial = np.concatenate([[0.0], np.cumsum(terms)])
    return np.abs(1.0 - partial[Ks])


def verify_representation(g: WeightedGraph, op: MarkovOperator, f: np.ndarray, M: int,
                          Ks: Sequence[int]) -> np.ndarray:
    """Residuals ``‖f − Σ_{k<K} c_{k,M} L^M P^k f‖₂`` for every ``K`` in ``Ks``.

    The partial sums are accumulated in a single pass; the terms are weighted
    by negative-binomial probabilities, so the accumulation is stable.
    """
    if M < 1:
        raise ValueError("M must be >= 1")
    Ks = sorted(int(K) for K in Ks)
    f = np.asarray(f, dtype=float)
    u = op.apply_L_power(M, f)
    S = np.zeros_like(f)
    out = {}
    c = 1.0                                    # c_{0,M}
    k = 0
    for K in Ks:
        while k < K:
            S += c * u
            u = op.P @ u
            c = c * (k + M) / (k + 1)          # c_{k+1,M}
            k += 1
        out[K] = op.norm2(f - S)
    return np.array([out[K] for K in Ks])


def level_cap_for(gap: float, M: int, tol: float) -> int:
    """Smallest ``K`` with ``Σ_{k≥K} c_{k,M} λ^M (1−λ)^k ≤ tol`` at ``λ = gap``.

    The tail is the survival function of a negative binomial law, and it is
    largest for the smallest nonzero eigenvalue when every eigenvalue is
    at most 1.
    """
    if not 0 < gap <= 1:
        raise ValueError("gap must lie in (0, 1]")
    lo, hi = 1, 1
    while nbinom.sf(hi - 1, M, gap) > tol:
        hi *= 2
    while lo < hi:
        mid = (lo + hi) // 2
        if nbinom.sf(mid - 1, M, gap) > tol:
            lo = mid + 1
        else:
            hi = mid
    return lo


def _residual_bounds(lam: np.ndarray, M: int, K: int) -> np.ndarray:
    """Upper bounds on ``|1 − λ^M Σ_{k<K} c_{k,M}(1−λ)^k|`` for every eigenvalue."""
    out = np.zeros_like(lam)
    low = (lam > 0) & (lam <= 1)
    out[low] = nbinom.sf(K - 1, M, lam[low])
    high = lam > 1
    if high.any():
        q = 2.0 - lam[high]
        out[high] = (lam[high] / q) ** M * nbinom.sf(K - 1, M, q)
    return out


def level_cap_for_function(op: MarkovOperator, f: np.ndarray, M: int, rtol: float,
                           K_max: int = 1 << 22) -> int:
    """Smallest ``K`` whose representation residual for ``f`` is at most ``rtol ‖f‖₂``.

    Uses the exact spectral coefficients of ``f``; the constant mode is
    ignored (it is not representable on a finite graph).
    """
    sd = spectral_decomposition(op)
    c = sd.coefficients(f)
    lam = sd.eigenvalues
    keep = lam > 1e-13
    c, lam = c[keep], lam[keep]
    target = rtol * op.norm2(f)

    def resid(K):
        return float(np.sqrt(np.sum((c * _residual_bounds(lam, M, K)) ** 2)))

    hi = 1
    while resid(hi) > target:
        hi *= 2
        if hi > K_max:
            raise ValueError("level cap exceeds K_max")
    lo = max(1, hi // 2)
    while lo < hi:
        mid = (lo + hi) // 2
        if resid(mid) > target:
            lo = mid + 1
        else:
            hi = mid
    return lo


# ----------------------------------------------------------------------
# tent-space atomic decomposition

@dataclass
class TentAtom:
    """One block ``(λ, a, B)`` of a tent-space decomposition."""

    lam: float
    payload: TentFunction
    ball: Ball
    level: int
    size: float = math.nan          # ‖𝒜 a‖_q
    bound: float = math.nan         # μ(B)^{1/q} ‖χ_B‖_{p(·)}^{-1}

    @property
    def required_scale(self) -> float:
        return self.size / self.bound


@dataclass
class TentDecomposition:
    """Output of :func:`tent_atomic_decomposition`."""

    atoms: list
    q: float
    k_range: tuple
    rescale_C: float
    reconstruction_error: float
    aggregate: float
    tent_norm: float
    overlaps: list = field(default_factory=list)
    pointwise_ok: bool = True
    support_ok: bool = True

    @property
    def lambdas(self) -> np.ndarray:
        return np.array([a.lam for a in self.atoms])

    @property
    def balls(self) -> list:
        return [a.ball for a in self.atoms]

    @property
    def ratio(self) -> float:
        """``𝒜({λ}, {B}) / ‖F‖_{T_2^{p(·)}}`` (0 for the empty decomposition)."""
        return self.aggregate / self.tent_norm if self.tent_norm > 0 else 0.0

    def reconstruct(self, n_vertices: int, K: int) -> np.ndarray:
        out = np.zeros((n_vertices, K))
        for a in self.atoms:
            block = a.lam * a.payload.values
            rows = a.payload.vertices if a.payload.vertices is not None else np.arange(n_vertices)
            out[rows, : block.shape[1]] += block
        return out


def _level_range(A: np.ndarray) -> tuple[int, int]:
    pos = A[A > 0]
    k_min = math.floor(math.log2(pos.min()))
    while 2.0 ** k_min >= pos.min():
        k_min -= 1
    k_max = math.ceil(math.log2(A.max()))
    while 2.0 ** k_max < A.max():
        k_max += 1
    return k_min, k_max


def _atom_area_norm(g, payload: TentFunction, q: float) -> float:
    A = area_functional(g, payload)
    return float(np.sum(A ** q * g.mu) ** (1.0 / q))


def tent_atomic_decomposition(g: WeightedGraph, p: ExponentFunction, F: TentFunction,
                              q: float = 2.0, check: bool = True) -> TentDecomposition:
    """Decompose a finitely supported tent function into tent atoms.

    With ``O_k = {𝒜F > 2^k}`` and ``Ω_k = {M(χ_{O_k}) > 1/2}`` (complement of
    the 1/2-density set of ``O_k^c``), the pieces
    ``F (χ_{T_{1/2}(Ω_k)} − χ_{T_{1/2}(Ω_{k+1})})`` are split further by the
    partition of unity of a Whitney cover of ``Ω_k``.  Each block is
    ``a = F φ (…) / λ`` with ``λ = 2^k ‖χ_B‖_{p(·)}`` and
    ``B = B(x, ⌈C_η r⌉)``, ``C_η = 26``.

    When ``Ω_k`` is the whole (finite) graph no Whitney cover exists; the
    piece becomes a single block on a ball centred at vertex 0 whose radius
    ``ecc(0) + K`` makes its tent contain every level.  Blocks with zero
    payload are dropped.

    Parameters
    ----------
    q : float
        Exponent of the atom size bound ``‖𝒜a‖_q ≤ μ(B)^{1/q} ‖χ_B‖^{-1}``.
    check : bool
        Recompute every atom's size, its tent support, the exact
        reconstruction and the stopping-time inequality.

    Returns
    -------
    TentDecomposition
        ``rescale_C`` is the smallest constant making every ``a / C`` satisfy
        the size bound.
    """
    if q <= 1:
        raise ValueError("q must be > 1")
    n, K = g.n_vertices, F.K
    Fd = F.dense()
    A = area_functional(g, F)
    if not np.any(A > 0):
        return TentDecomposition([], q, (0, 0), 0.0, float(np.abs(Fd).max(initial=0.0)), 0.0, 0.0)
    k_min, k_max = _level_range(A)
    ecc0 = int(g.dist[0].max())
    atoms: list[TentAtom] = []
    overlaps = []

    def omega_for(k):
        O = A > 2.0 ** k
        return ~global_density_set(g, ~O, GAMMA)

    omega_next = omega_for(k_min)
    T_next = tent_region_mask(g, omega_next, 1.0 - ETA, K)
    for k in range(k_min, k_max):
        omega_k, T_k = omega_next, T_next
        omega_next = omega_for(k + 1)
        T_next = tent_region_mask(g, omega_next, 1.0 - ETA, K)
        region = T_k & ~T_next
        if not region.any():
            continue
        piece = np.where(region, Fd, 0.0)
        if not piece.any():
            continue
        if omega_k.all():
            b = Ball(0, ecc0 + K)
            lam = 2.0 ** k * ball_indicator_norm(p, b)
            last = int(np.flatnonzero(piece.any(axis=0))[-1]) + 1
            atoms.append(TentAtom(lam, TentFunction(piece[:, :last] / lam, n), b, k))
            continue
        cover = whitney_cover(g, omega_k)
        overlaps.append(cover.overlap)
        for x, r, phi in zip(cover.centers, cover.radii, cover.phi):
            rows = np.flatnonzero(phi > 0)
            block = piece[rows] * phi[rows, None]
            if not block.any():
                continue
            last = int(np.flatnonzero(block.any(axis=0))[-1]) + 1
            b = Ball(int(x), math.ceil(C_ETA * r - 1e-12))
            lam = 2.0 ** k * ball_indicator_norm(p, b)
            atoms.append(TentAtom(lam, TentFunction(block[:, :last] / lam, n, rows), b, k))

    decomp = TentDecomposition(atoms, q, (k_min, k_max), 0.0, 0.0, 0.0, 0.0, overlaps)
    decomp.reconstruction_error = float(np.abs(decomp.reconstruct(n, K) - Fd).max())
    for a in atoms:
        a.bound = a.ball.measure(g) ** (1.0 / q) / ball_indicator_norm(p, a.ball)
    if check:
        for a in atoms:
            a.size = _atom_area_norm(g, a.payload, q)
            rows = a.payload.vertices if a.payload.vertices is not None else np.arange(n)
            d = g.dist[a.ball.center, rows]
            lv = np.arange(1, a.payload.K + 1)
            outside = d[:, None] > a.ball.radius - lv[None, :]
            if np.any(a.payload.values[outside] != 0):
                decomp.support_ok = False
        decomp.rescale_C = max((a.required_scale for a in atoms), default=0.0)
        fp = p.frak_p
        lhs = np.zeros(n)
        for k in range(k_min, k_max + 1):
            lhs += 2.0 ** (k * fp) * (A > 2.0 ** k)
        decomp.pointwise_ok = bool(np.all(lhs <= A ** fp / (1 - 2.0 ** -fp) * (1 + 1e-12)))
    decomp.tent_norm = luxemburg_norm(p, A)
    decomp.aggregate = aggregate_A(p, decomp.lambdas, decomp.balls)
    return decomp


def random_tent_atom(g: WeightedGraph, p: ExponentFunction, q: float, rng: np.random.Generator,
                     max_radius: int | None = None, min_radius: int = 2) -> tuple[TentFunction, Ball]:
    """Random ``(T_2^{p(·)}, q)``-atom on a random ball, scaled to saturate the size bound."""
    b = random_ball(g, rng, max_radius, min_radius)
    d = g.dist[b.center]
    rows = np.flatnonzero(d < b.radius)
    lv = np.arange(1, b.radius + 1)
    inside = d[rows][:, None] <= b.radius - lv[None, :]
    vals = np.where(inside, rng.standard_normal((rows.size, lv.size)), 0.0)
    payload = TentFunction(vals, g.n_vertices, rows)
    size = _atom_area_norm(g, payload, q)
    bound = b.measure(g) ** (1.0 / q) / ball_indicator_norm(p, b)
    return payload.scale(bound / size * (1 - 1e-12)), b


# ----------------------------------------------------------------------
# Hardy atoms

@dataclass
class HardyAtomCertificate:
    """``a = L^M b`` with ``supp L^k b ⊂ B`` and ``‖L^k b‖_r ≤ r_B^{M−k} μ(B)^{1/r} ‖χ_B‖^{-1}``."""

    a: np.ndarray
    powers: list               # L^k b, k = 0..M
    ball: Ball
    r: float
    M: int
    norms: list = field(default_factory=list)
    bounds: list = field(default_factory=list)

    @property
    def b(self) -> np.ndarray:
        return self.powers[0]

    @property
    def required_scale(self) -> float:
        return max(n / b for n, b in zip(self.norms, self.bounds))

    def scaled(self, t: float) -> "HardyAtomCertificate":
        return HardyAtomCertificate(self.a * t, [u * t for u in self.powers], self.ball, self.r,
                                    self.M, [v * t for v in self.norms], list(self.bounds))


def _lr_norm(g, f, r):
    return float(np.sum(np.abs(f) ** r * g.mu) ** (1.0 / r))


def _hardy_certificate(g, p, a, powers, ball, r, M):
    norms = [_lr_norm(g, u, r) for u in powers]
    base = ball.measure(g) ** (1.0 / r) / ball_indicator_norm(p, ball)
    bounds = [ball.radius ** (M - k) * base for k in range(M + 1)]
    return HardyAtomCertificate(a, list(powers), ball, r, M, norms, bounds)


def verify_hardy_atom(g: WeightedGraph, op: MarkovOperator, p: ExponentFunction,
                      cert: HardyAtomCertificate, rtol: float = 1e-9,
                      support_rtol: float = 0.0) -> dict:
    """Re-check a Hardy-atom certificate from scratch.

    Returns a dict with ``passed`` plus the individual checks: the identity
    ``a = L^M b``, the support of every ``L^k b`` and the size bounds.
    ``support_rtol`` tolerates values up to that fraction of the maximum
    outside the ball (only needed for spectrally evaluated witnesses).
    """
    # check the chain L^{k+1} b = L (L^k b) one step at a time, relative to
    # the size of L^k b, so huge witnesses do not masquerade as failures
    identity = float(np.abs(cert.powers[-1] - cert.a).max(initial=0.0)) / max(
        np.abs(cert.a).max(initial=0.0), 1e-300)
    for k in range(cert.M):
        u = cert.powers[k]
        step = u - op.P @ u - cert.powers[k + 1]
        identity = max(identity, float(np.abs(step).max(initial=0.0))
                       / max(np.abs(u).max(initial=0.0), 1e-300))
    mask = cert.ball.mask(g)
    support = all(np.abs(u[~mask]).max(initial=0.0) <= support_rtol * np.abs(u).max(initial=0.0)
                  for u in cert.powers)
    base = cert.ball.measure(g) ** (1.0 / cert.r) / ball_indicator_norm(p, cert.ball)
    sizes = [_lr_norm(g, u, cert.r) / (cert.ball.radius ** (cert.M - k) * base)
             for k, u in enumerate(cert.powers)]
    size_ok = max(sizes) <= 1 + rtol
    id_ok = identity <= 1e-9
    return {"passed": bool(support and size_ok and id_ok), "support": bool(support),
            "size": bool(size_ok), "identity": bool(id_ok), "identity_error": identity,
            "max_size_ratio": float(max(sizes))}


def random_hardy_atom(g: WeightedGraph, op: MarkovOperator, p: ExponentFunction, r: float, M: int,
                      rng: np.random.Generator, ball: Ball | None = None,
                      max_radius: int | None = None) -> HardyAtomCertificate:
    """Random ``(r, p(·), M)``-atom: ``b`` supported in ``B(x, r_B − M)``, ``a = L^M b``.

    The witness is rescaled so that the tightest size bound holds with
    equality.
    """
    if ball is None:
        ball = random_ball(g, rng, max_radius, min_radius=M + 1)
    inner = g.dist[ball.center] < max(1, ball.radius - M)
    b = np.where(inner, rng.standard_normal(g.n_vertices), 0.0)
    powers = [b]
    for _ in range(M):
        powers.append(powers[-1] - op.P @ powers[-1])
    cert = _hardy_certificate(g, p, powers[-1], powers, ball, r, M)
    return cert.scaled((1 - 1e-12) / cert.required_scale)


@dataclass
class HardyDecomposition:
    """Output of :func:`hardy_atomic_decomposition`."""

    certificates: list
    lambdas: np.ndarray
    rescale_C: float
    tent: TentDecomposition | None
    K: int
    residual: float
    relative_residual: float
    aggregate: float
    hardy_norm: float
    methods: dict = field(default_factory=dict)

    @property
    def balls(self) -> list:
        return [c.ball for c in self.certificates]

    @property
    def ratio(self) -> float:
        return self.aggregate / self.hardy_norm if self.hardy_norm > 0 else 0.0

    def reconstruct(self) -> np.ndarray:
        if not self.certificates:
            return np.zeros(0)
        return sum(l * c.a for l, c in zip(self.lambdas, self.certificates))


def _check_hardy_params(g, p, r, M, D):
    if r < 2 or r <= p.p_plus:
        raise HypothesisError("r >= 2 and r > p_plus", f"r = {r:g}, p_plus = {p.p_plus:g}")
    if M <= 2 * D / p.p_minus:
        raise HypothesisError("M > 2D/p_minus",
                              f"M = {M}, need M > {2 * D / p.p_minus:.4g} (D = {D:.4g})")


def hardy_atomic_decomposition(g: WeightedGraph, op: MarkovOperator, p: ExponentFunction,
                               f: np.ndarray, r: float, M: int, K: int | None = None,
                               D: float | None = None, rtol: float = 1e-4) -> HardyDecomposition:
    """Decompose ``f`` into ``(r, p(·), M)``-atoms.

    ``F(y, k) = k L P^{⌊k/2⌋} f(y)`` (levels ``1..K``) is split by
    :func:`tent_atomic_decomposition` into ``(T_2^{p(·)}, r)``-atoms
    ``a_j`` on balls ``B_j``; each ``Π_M a_j = L^M b_j`` is certified as an
    atom on ``𝔹_j = B(x_{B_j}, (M + 2) r_{B_j})`` after one global rescale.

    Parameters
    ----------
    K : int, optional
        Level cap; chosen from the spectrum of ``L`` so the representation
        residual is at most ``rtol ‖f‖₂`` when omitted.
    D : float, optional
        Doubling exponent for the hypothesis ``M > 2D/p_−`` (fitted when
        omitted).

    Raises
    ------
    HypothesisError
        If ``r < 2``, ``r ≤ p_+``, ``M ≤ 2D/p_−`` or ``f`` is not mean-zero.
    """
    f = np.asarray(f, dtype=float)
    if D is None:
        D = fit_doubling(g).D_exponent
    _check_hardy_params(g, p, r, M, D)
    scale = float(np.sum(np.abs(f) * g.mu))
    if scale == 0:
        return HardyDecomposition([], np.zeros(0), 0.0, None, 0, 0.0, 0.0, 0.0, 0.0)
    if abs(float(np.sum(f * g.mu))) > 1e-10 * scale:
        raise HypothesisError("mean-zero f", "constants are not representable on a finite graph")
    if K is None:
        K = level_cap_for_function(op, f, M + 1, rtol)
    F = sl_tent_function(op, f, K)
    tent_dec = tent_atomic_decomposition(g, p, F, q=r)
    certs, lams, methods = [], [], {}
    for atom in tent_dec.atoms:
        res = pi_M(g, op, atom.payload, M)
        methods[res.method] = methods.get(res.method, 0) + 1
        big = Ball(atom.ball.center, (M + 2) * atom.ball.radius)
        certs.append(_hardy_certificate(g, p, res.a, res.powers, big, r, M))
        lams.append(atom.lam)
    C = max((c.required_scale for c in certs), default=0.0)
    certs = [c.scaled(1.0 / C) for c in certs]
    lams = np.array(lams) * C
    recon = sum(l * c.a for l, c in zip(lams, certs)) if certs else np.zeros_like(f)
    resid = op.norm2(f - recon)
    hn = luxemburg_norm(p, square_function_SL(g, op, f))
    agg = aggregate_A(p, lams, [c.ball for c in certs])
    return HardyDecomposition(certs, lams, C, tent_dec, K, resid, resid / op.norm2(f), agg, hn,
                              methods)


# ----------------------------------------------------------------------
# molecules

@dataclass
class MoleculeCertificate:
    """``m = L^M b`` with annulus-wise decay of ``L^k b`` around ``B``."""

    m: np.ndarray
    powers: list
    ball: Ball
    q: float
    M: int
    eps: float


@dataclass
class MoleculeReport:
    """Per-annulus slack ``ratio[k, j] = lhs / rhs`` (pass iff every ratio ≤ 1)."""

    passed: bool
    ratios: np.ndarray
    worst: tuple
    required_scale: float
    C_sum: float


def _annuli(g, ball: Ball):
    d = g.dist[ball.center]
    r = ball.radius
    masks = [d < r]
    j = 1
    while 2 ** (j - 1) * r <= g.diameter:
        masks.append((d < 2 ** (j + 1) * r) & (d >= 2 ** (j - 1) * r))
        j += 1
    return masks


def verify_molecule(g: WeightedGraph, p: ExponentFunction, cert: MoleculeCertificate,
                    rtol: float = 1e-9) -> MoleculeReport:
    """Check every ``(k, j)`` molecule inequality and the summed size bound.

    ``‖L^k b‖_{L^q(𝔖_j)} ≤ r_B^{M−k} 2^{−jε} μ(2^j B)^{1/q} ‖χ_{2^j B}‖^{-1}``
    for ``k = 0..M`` and every annulus ``𝔖_j`` meeting the graph; the
    summed bound ``‖L^k b‖_q ≤ C r_B^{M−k} μ(B)^{1/q} ‖χ_B‖^{-1}`` is
    reported as ``C_sum``.
    """
    masks = _annuli(g, cert.ball)
    x, r = cert.ball.center, cert.ball.radius
    q, M, eps = cert.q, cert.M, cert.eps
    rhs_j = []
    for j in range(len(masks)):
        bj = Ball(x, 2 ** j * r)
        rhs_j.append(2.0 ** (-j * eps) * bj.measure(g) ** (1 / q) / ball_indicator_norm(p, bj))
    ratios = np.zeros((M + 1, len(masks)))
    for k, u in enumerate(cert.powers):
        for j, mask in enumerate(masks):
            lhs = float(np.sum(np.abs(u[mask]) ** q * g.mu[mask]) ** (1 / q))
            ratios[k, j] = lhs / (r ** (M - k) * rhs_j[j])
    worst = np.unravel_index(int(np.argmax(ratios)), ratios.shape)
    base = cert.ball.measure(g) ** (1 / q) / ball_indicator_norm(p, cert.ball)
    C_sum = max(_lr_norm(g, u, q) / (r ** (M - k) * base) for k, u in enumerate(cert.powers))
    req = float(ratios.max())
    return MoleculeReport(req <= 1 + rtol, ratios, (int(worst[0]), int(worst[1])), req, C_sum)


def molecule_from_tent_atom(g: WeightedGraph, op: MarkovOperator, payload: TentFunction,
                            ball: Ball, q: float, M: int, eps: float) -> MoleculeCertificate:
    """``Π_M`` of a tent atom as a molecule around the atom's ball."""
    res = pi_M(g, op, payload, M)
    return MoleculeCertificate(res.a, res.powers, ball, q, M, eps)


# ----------------------------------------------------------------------
# cancellative (2, p(·))-atoms

@dataclass
class SimpleAtomCertificate:
    """``supp a ⊂ B``, ``‖a‖₂ ≤ μ(B)^{1/2} ‖χ_B‖^{-1}`` and ``Σ_B a μ = 0``."""

    a: np.ndarray
    ball: Ball


def verify_simple_atom(g: WeightedGraph, p: ExponentFunction, cert: SimpleAtomCertificate,
                       rtol: float = 1e-9) -> bool:
    mask = cert.ball.mask(g)
    if np.any(cert.a[~mask] != 0):
        return False
    bound = cert.ball.measure(g) ** 0.5 / ball_indicator_norm(p, cert.ball)
    if _lr_norm(g, cert.a, 2) > bound * (1 + rtol):
        return False
    return abs(float(np.sum(cert.a * g.mu))) <= 1e-10 * max(1.0, float(np.sum(np.abs(cert.a) * g.mu)))


def random_simple_atom(g: WeightedGraph, p: ExponentFunction, rng: np.random.Generator,
                       ball: Ball | None = None, max_radius: int | None = None) -> SimpleAtomCertificate:
    if ball is None:
        ball = random_ball(g, rng, max_radius, min_radius=2)
    mask = ball.mask(g)
    a = np.where(mask, rng.standard_normal(g.n_vertices), 0.0)
    a[mask] -= np.sum(a[mask] * g.mu[mask]) / np.sum(g.mu[mask])
    bound = ball.measure(g) ** 0.5 / ball_indicator_norm(p, ball)
    a *= bound / _lr_norm(g, a, 2) * (1 - 1e-12)
    return SimpleAtomCertificate(a, ball)


# ----------------------------------------------------------------------
# empirical verifiers

def _require_hardy_exponent(p, M, D, what="M"):
    if M <= 2 * D / p.p_minus:
        raise HypothesisError(f"{what} > 2D/p_minus", f"{what} = {M}, 2D/p_minus = {2 * D / p.p_minus:.4g}")


def verify_atom_synthesis(g: WeightedGraph, op: MarkovOperator, p: ExponentFunction,
                          families: Sequence[tuple[np.ndarray, list]], r: float, M: int,
                          D: float | None = None) -> VerificationResult:
    """``‖S_L(Σ λ_j a_j)‖_{p(·)} / 𝒜({λ_j}, {B_j})`` over families of Hardy atoms.

    Each family is a pair ``(lambdas, certificates)``.  Invalid certificates
    raise ``ValueError`` naming the family and atom index.
    """
    if D is None:
        D = fit_doubling(g).D_exponent
    _check_hardy_params(g, p, r, M, D)
    ratios = []
    for fi, (lams, certs) in enumerate(families):
        if len(certs) == 0 or not np.any(lams):
            ratios.append(0.0)
            continue
        for ai, c in enumerate(certs):
            if not verify_hardy_atom(g, op, p, c)["passed"]:
                raise ValueError(f"family {fi}: certificate {ai} fails its verifier")
        f = sum(l * c.a for l, c in zip(lams, certs))
        num = luxemburg_norm(p, square_function_SL(g, op, f))
        ratios.append(num / aggregate_A(p, lams, [c.ball for c in certs]))
    return max_ratio("thm-1.2a", ratios, {"r": r, "M": M, "D": D})


def verify_molecular_synthesis(g: WeightedGraph, op: MarkovOperator, p: ExponentFunction,
                               families: Sequence[tuple[np.ndarray, list]], q: float, M: int,
                               eps: float, D: float | None = None) -> VerificationResult:
    """``‖S_L(Σ λ_j m_j)‖_{p(·)} / 𝒜({λ_j}, {B_j})`` over molecule families."""
    if D is None:
        D = fit_doubling(g).D_exponent
    _require_hardy_exponent(p, M, D)
    if eps <= D / p.p_minus:
        raise HypothesisError("eps > D/p_minus", f"eps = {eps:g}")
    if q < 2 or q <= p.p_plus:
        raise HypothesisError("q >= 2 and q > p_plus", f"q = {q:g}")
    ratios = []
    for lams, certs in families:
        if len(certs) == 0 or not np.any(lams):
            ratios.append(0.0)
            continue
        f = sum(l * c.m for l, c in zip(lams, certs))
        num = luxemburg_norm(p, square_function_SL(g, op, f))
        ratios.append(num / aggregate_A(p, lams, [c.ball for c in certs]))
    return max_ratio("thm-1.4", ratios, {"q": q, "M": M, "eps": eps, "D": D})


def verify_mplus_bound(g: WeightedGraph, op: MarkovOperator, p: ExponentFunction,
                       functions: Sequence[np.ndarray], K: int | None = None) -> VerificationResult:
    """``‖M_+ f‖_{p(·)} / ‖S_L f‖_{p(·)}``; functions with ``S_L f = 0`` are skipped."""
    ratios = []
    for f in functions:
        s = luxemburg_norm(p, square_function_SL(g, op, f))
        if s <= 1e-10 * luxemburg_norm(p, f):
            ratios.append(math.nan)
            continue
        ratios.append(luxemburg_norm(p, radial_maximal(g, op, f, K)) / s)
    return max_ratio("prop-m+", ratios, {"p": p.describe()})


def verify_simple_atom_bound(g: WeightedGraph, op: MarkovOperator, p: ExponentFunction,
                             families: Sequence[tuple[np.ndarray, list]],
                             D: float | None = None, h: float | None = None,
                             poincare_cap: float = 1e3, K: int | None = None) -> VerificationResult:
    """``‖M_+(Σ λ_j a_j)‖_{p(·)} / 𝒜({λ_j}, {B_j})`` for cancellative ``(2, p(·))``-atoms.

    Requires a finite Poincaré constant (at most ``poincare_cap``), ``p_+ < 2``
    and ``D/(D + h) < 𝔭`` with ``h`` from the kernel-regularity fit.
    """
    poin = check_poincare(g, (1, max(1, min(4, g.diameter // 4))), trials=0)
    if not poin.C <= poincare_cap:
        raise HypothesisError("Poincare property", f"fitted C = {poin.C:.4g}")
    if p.p_plus >= 2:
        raise HypothesisError("p_plus < 2", f"p_plus = {p.p_plus:g}")
    if D is None:
        D = fit_doubling(g).D_exponent
    if h is None:
        h = fit_holder_regularity(op, min(64, max(4, g.diameter ** 2 // 16))).h
    if not D / (D + h) < p.frak_p:
        raise HypothesisError("D/(D+h) < frak_p", f"D = {D:.4g}, h = {h:g}, frak_p = {p.frak_p:g}")
    ratios = []
    for fi, (lams, certs) in enumerate(families):
        if len(certs) == 0 or not np.any(lams):
            ratios.append(0.0)
            continue
        for ai, c in enumerate(certs):
            if not verify_simple_atom(g, p, c):
                raise ValueError(f"family {fi}: atom {ai} is not a cancellative (2, p)-atom")
        f = sum(l * c.a for l, c in zip(lams, certs))
        num = luxemburg_norm(p, radial_maximal(g, op, f, K))
        ratios.append(num / aggregate_A(p, lams, [c.ball for c in certs]))
    return max_ratio("prop-simple-atom", ratios,
                     {"D": D, "h": h, "poincare_C": poin.C})


def verify_equal_lebesgue(g: WeightedGraph, op: MarkovOperator, p: ExponentFunction,
                          trials: int, rng: np.random.Generator,
                          functions: Sequence[np.ndarray] | None = None) -> VerificationResult:
    """Two-sided comparison of ``‖S_L f‖_{p(·)}`` and ``‖f‖_{p(·)}`` for ``p_− > 1``.

    Inputs are mean-zero.  ``fitted_C`` is the smallest ``C`` with both
    ``‖S_L f‖/‖f‖`` and ``‖f‖/‖S_L f‖`` in ``[1/C, C]``; the two directional
    maxima are in ``extra``.
    """
    if p.p_minus <= 1:
        raise HypothesisError("p_minus > 1", f"p_minus = {p.p_minus:g}")
    if functions is None:
        functions = [random_function(g, rng, mean_zero_=True) for _ in range(trials)]
    fs = np.array([mean_zero(g, f) for f in functions])
    S = np.array([square_function_SL(g, op, f) for f in fs])
    up = luxemburg_norm_batch(p, S) / luxemburg_norm_batch(p, fs)
    down = 1.0 / up
    res = max_ratio("prop-equal", np.maximum(up, down))
    res.extra = {"max_SL_over_f": float(up.max()), "max_f_over_SL": float(down.max()),
                 "min_SL_over_f": float(up.min()), "p": p.describe()}
    return res


def verify_pi_M_bound(g: WeightedGraph, op: MarkovOperator, M: int, q: float,
                      trials: int, rng: np.random.Generator, K: int = 8) -> VerificationResult:
    """``‖Π_M F‖_q / ‖F‖_{T_2^q}`` on random tent functions with ``K`` levels."""
    ratios = []
    for _ in range(trials):
        F = TentFunction(rng.standard_normal((g.n_vertices, K)), g.n_vertices)
        a = pi_M(g, op, F, M).a
        A = area_functional(g, F)
        ratios.append(_lr_norm(g, a, q) / _lr_norm(g, A, q))
    return max_ratio("pi-M", ratios, {"M": M, "q": q})
