"""Gradient, Riesz transform, spectral multipliers and their Hardy-space verifiers.

Functional calculus is evaluated through the dense eigendecomposition of
``L`` (see :mod:`graphhardy.eigen`); the Riesz transform additionally has a
matrix-free series form ``∇ Σ_k β_k P^k f`` with ``(1 − z)^{-1/2} = Σ β_k z^k``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .atomic import (MoleculeCertificate, random_hardy_atom, verify_molecule)
from .eigen import spectral_decomposition
from .graph import WeightedGraph, fit_doubling
from .markov import MarkovOperator
from .results import HypothesisError, VerificationResult, max_ratio
from .sampling import random_function
from .tent import sl_tent_function, square_function_GN, square_function_SL
from .varexp import ExponentFunction, check_muckenhoupt, hl_maximal, luxemburg_norm, weighted_norm

__all__ = [
    "gradient",
    "beta_coefficients",
    "riesz_level_cap",
    "riesz_transform_series",
    "riesz_transform_spectral",
    "sqrt_L",
    "inv_sqrt_L",
    "bump",
    "smooth_cutoff",
    "MultiplierSpec",
    "MultiplierParseError",
    "parse_multiplier",
    "read_multiplier_file",
    "spectral_multiplier",
    "dyadic_decomposition",
    "dyadic_exact_threshold",
    "estimate_Rs",
    "square_function_SL_abs",
    "verify_multiplier_hardy",
    "verify_riesz_hardy",
    "verify_GN_hardy",
    "maximal_truncated_area",
    "verify_weighted_SL",
]


# ----------------------------------------------------------------------
# gradient and Riesz transform

def gradient(g: WeightedGraph, f: np.ndarray) -> np.ndarray:
    """``∇f(x) = (½ Σ_y p(x, y) |f(x) − f(y)|²)^{1/2}``.

    Evaluated edge by edge, so constants give exactly zero.  Complex ``f``
    is allowed.
    """
    P = getattr(g, "_P_cache", None)
    if P is None:
        P = MarkovOperator(g).P
        g._P_cache = P
    f = np.asarray(f)
    rows = np.repeat(np.arange(g.n_vertices), np.diff(P.indptr))
    diff = np.abs(f[rows] - f[P.indices]) ** 2
    out = np.bincount(rows, weights=P.data * diff, minlength=g.n_vertices)
    return np.sqrt(0.5 * out)


def beta_coefficients(K: int) -> list[float]:
    """Taylor coefficients ``β_0..β_K`` of ``(1 − z)^{-1/2}``.

    ``β_0 = 1`` and ``β_k = β_{k−1} (2k − 1) / (2k)``.
    """
    if K < 0:
        raise ValueError("K must be >= 0")
    out = [1.0]
    for k in range(1, K + 1):
        out.append(out[-1] * (2 * k - 1) / (2 * k))
    return out


def _require_mean_zero(g, f):
    f = np.asarray(f)
    scale = float(np.sum(np.abs(f) * g.mu))
    if scale and abs(np.sum(f * g.mu)) > 1e-10 * scale:
        raise HypothesisError("mean-zero f", "the constant mode makes L^{-1/2} undefined")


def riesz_level_cap(op: MarkovOperator, tol: float) -> int:
    """``K = ⌈log(tol) / log ρ⌉`` with ``ρ = max_{λ_i > 0} |1 − λ_i|``.

    ``ρ`` is the contraction factor of ``P`` on the complement of constants.
    """
    lam = spectral_decomposition(op).eigenvalues
    lam = lam[lam > 1e-12]
    rho = float(np.max(np.abs(1.0 - lam)))
    if rho <= 0:
        return 1
    return max(1, math.ceil(math.log(tol) / math.log(rho)))


def riesz_transform_series(g: WeightedGraph, op: MarkovOperator, f: np.ndarray,
                           K: int) -> np.ndarray:
    """``∇(Σ_{k ≤ K} β_k P^k f)`` for mean-zero ``f``."""
    f = np.asarray(f, dtype=float)
    _require_mean_zero(g, f)
    beta = beta_coefficients(K)
    acc = np.zeros_like(f)
    u = f.copy()
    for k in range(K + 1):
        acc += beta[k] * u
        if k < K:
            u = op.P @ u
    return gradient(g, acc)


def inv_sqrt_L(op: MarkovOperator, f: np.ndarray) -> np.ndarray:
    """``L^{-1/2} f`` on the complement of constants (``f`` must be mean-zero)."""
    _require_mean_zero(op.graph, f)
    sd = spectral_decomposition(op)
    lam = sd.eigenvalues
    vals = np.zeros_like(lam)
    vals[lam > 1e-12] = lam[lam > 1e-12] ** -0.5
    return sd.apply(vals, f)


def sqrt_L(op: MarkovOperator, f: np.ndarray) -> np.ndarray:
    """``L^{1/2} f``."""
    sd = spectral_decomposition(op)
    return sd.apply(np.sqrt(sd.eigenvalues), f)


def riesz_transform_spectral(g: WeightedGraph, op: MarkovOperator, f: np.ndarray) -> np.ndarray:
    """``∇ L^{-1/2} f`` through the eigendecomposition (ground truth for the series)."""
    return gradient(g, inv_sqrt_L(op, f))


# ----------------------------------------------------------------------
# multipliers

def _h(s):
    s = np.asarray(s, dtype=float)
    out = np.zeros_like(s)
    pos = s > 0
    out[pos] = np.exp(-1.0 / s[pos])
    return out


def smooth_cutoff(t) -> np.ndarray:
    """Smooth ``θ₀`` equal to 1 on ``(−∞, 1]`` and 0 on ``[3/2, ∞)``."""
    t = np.asarray(t, dtype=float)
    a, b = _h(1.5 - t), _h(t - 1.0)
    return a / (a + b)


def bump(lam) -> np.ndarray:
    """Fixed bump ``η`` supported in ``(1/2, 3/2)`` with ``η(1) = 1``."""
    lam = np.asarray(lam, dtype=float)
    u = (lam - 1.0) / 0.5
    out = np.zeros_like(lam)
    inside = np.abs(u) < 1
    out[inside] = np.exp(-1.0 / (1.0 - u[inside] ** 2) + 1.0)
    return out


class MultiplierParseError(ValueError):
    """Malformed multiplier specification or table file."""


@dataclass
class MultiplierSpec:
    """A bounded function ``F`` on ``[0, 2]`` used as ``F(L)``.

    Attributes
    ----------
    F : callable
        Vectorised; may return complex values.
    name : str
    s : float
        Smoothness order claimed for the ``R_s`` condition (informational).
    """

    F: Callable[[np.ndarray], np.ndarray]
    name: str = "custom"
    s: float = 1.0
    params: dict = field(default_factory=dict)

    def __call__(self, lam):
        return self.F(np.asarray(lam, dtype=float))

    def sup_norm(self, n_samples: int = 20001) -> float:
        return float(np.abs(self(np.linspace(0.0, 2.0, n_samples))).max())

    @classmethod
    def identity(cls) -> "MultiplierSpec":
        return cls(lambda lam: np.ones_like(lam), "identity", s=math.inf)

    @classmethod
    def heat(cls, n: int) -> "MultiplierSpec":
        return cls(lambda lam: (1.0 - lam) ** n, f"heat:{n}", s=math.inf, params={"n": n})

    @classmethod
    def imaginary_power(cls, tau: float) -> "MultiplierSpec":
        def F(lam):
            out = np.zeros(lam.shape, dtype=complex)
            pos = lam > 0
            out[pos] = np.exp(1j * tau * np.log(lam[pos]))
            return out
        return cls(F, f"imaginary-power:{tau:g}", s=math.inf, params={"tau": tau})

    @classmethod
    def step(cls, at: float = 1.0) -> "MultiplierSpec":
        return cls(lambda lam: (lam <= at).astype(float), "step", s=0.0, params={"at": at})

    @classmethod
    def table(cls, lam: np.ndarray, values: np.ndarray, name: str = "table") -> "MultiplierSpec":
        lam = np.asarray(lam, dtype=float)
        values = np.asarray(values, dtype=float)
        return cls(lambda x: np.interp(x, lam, values), name, s=1.0)


def read_multiplier_file(path: str | Path) -> MultiplierSpec:
    """Table file with ``lambda F(lambda)`` rows (``#`` comments); linear interpolation."""
    lam, vals = [], []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.replace(",", " ").split()
        if len(parts) != 2:
            raise MultiplierParseError(f"{path}:{lineno}: expected 'lambda F(lambda)'")
        try:
            x, y = float(parts[0]), float(parts[1])
        except ValueError:
            raise MultiplierParseError(f"{path}:{lineno}: not a number") from None
        if lam and x <= lam[-1]:
            raise MultiplierParseError(f"{path}:{lineno}: lambda values must increase")
        lam.append(x)
        vals.append(y)
    if len(lam) < 2:
        raise MultiplierParseError(f"{path}: need at least two rows")
    if lam[0] > 0 or lam[-1] < 2:
        raise MultiplierParseError(f"{path}: table must cover [0, 2]")
    return MultiplierSpec.table(np.array(lam), np.array(vals), name=f"file:{path}")


def parse_multiplier(spec: str) -> MultiplierSpec:
    """``identity``, ``heat:n``, ``imaginary-power:tau``, ``step`` or ``file:PATH``."""
    head, _, rest = spec.partition(":")
    try:
        if head == "identity" and not rest:
            return MultiplierSpec.identity()
        if head == "heat":
            n = int(rest)
            if n < 0:
                raise ValueError
            return MultiplierSpec.heat(n)
        if head == "imaginary-power":
            return MultiplierSpec.imaginary_power(float(rest))
        if head == "step" and not rest:
            return MultiplierSpec.step()
        if head == "file":
            return read_multiplier_file(rest)
    except MultiplierParseError:
        raise
    except ValueError:
        raise MultiplierParseError(f"bad multiplier parameters in {spec!r}") from None
    raise MultiplierParseError(f"unknown multiplier {spec!r}")


def spectral_multiplier(op: MarkovOperator, spec: MultiplierSpec | Callable, f: np.ndarray) -> np.ndarray:
    """``F(L) f = Σ_i F(λ_i) ⟨f, v_i⟩_μ v_i`` (real output when ``F`` is real)."""
    sd = spectral_decomposition(op)
    vals = np.asarray(spec(sd.eigenvalues))
    if np.iscomplexobj(vals) and np.all(vals.imag == 0):
        vals = vals.real
    return sd.apply(vals, np.asarray(f))


def dyadic_exact_threshold(l_max: int) -> float:
    """Smallest ``λ`` from which ``Σ_{ℓ ≤ l_max} F_ℓ = F`` holds exactly: ``3·2^{−l_max−2}``."""
    return 3.0 * 2.0 ** (-l_max - 2)


def dyadic_decomposition(spec: MultiplierSpec | Callable, l_max: int) -> list[Callable]:
    """Pieces ``F_0, …, F_{l_max}`` of a multiplier.

    ``ψ_ℓ(t) = θ₀(2^ℓ t) − θ₀(2^{ℓ+1} t)`` (supported in
    ``[2^{−ℓ−1}, 3·2^{−ℓ−1}]``), ``F_ℓ = F ψ_ℓ`` for ``ℓ ≥ 1`` and
    ``F_0 = F (1 − θ₀(2λ))``.  The sum telescopes to
    ``F (1 − θ₀(2^{l_max+1} λ))``, which equals ``F`` for
    ``λ ≥ 3·2^{−l_max−2}``.
    """
    if l_max < 0:
        raise ValueError("l_max must be >= 0")

    def piece(l):
        if l == 0:
            return lambda lam: spec(lam) * (1.0 - smooth_cutoff(2.0 * np.asarray(lam, float)))
        return lambda lam: spec(lam) * (smooth_cutoff(2.0 ** l * np.asarray(lam, float))
                                        - smooth_cutoff(2.0 ** (l + 1) * np.asarray(lam, float)))

    return [piece(l) for l in range(l_max + 1)]


def _fd_derivative(fun, x, order, h):
    """Central finite difference of given order at step ``h``."""
    if order == 0:
        return fun(x)
    acc = 0
    for i in range(order + 1):
        acc = acc + (-1) ** i * math.comb(order, i) * fun(x + (order / 2 - i) * h)
    return acc / h ** order


def _derivative(fun, x, order, h=1e-4):
    d1 = _fd_derivative(fun, x, order, h)
    if order == 0:
        return d1
    d2 = _fd_derivative(fun, x, order, h / 2)
    return (4 * d2 - d1) / 3.0          # Richardson extrapolation


def estimate_Rs(spec: MultiplierSpec | Callable, s: float, t_grid: Sequence[float] | None = None,
                x_grid: Sequence[float] | None = None, h: float = 1e-4) -> dict:
    """Estimate ``sup_t ‖η(·) F(t ·)‖_{𝒞^s}``.

    ``‖g‖_{𝒞^s} = Σ_{j ≤ ⌊s⌋} sup|g^{(j)}| + sup_{x ≠ y} |g^{(⌊s⌋)}(x) −
    g^{(⌊s⌋)}(y)| / |x − y|^{s − ⌊s⌋}`` (the quotient term is omitted for
    integer ``s``).  Derivatives use central differences with Richardson
    extrapolation; the Hölder quotient runs over all pairs of grid points.
    The default ``t`` grid is ``2^{-12}, 2^{-11.5}, …, 1, 4/3``; ``h`` is
    the difference step.  The value is an estimate, never a certificate:
    for a non-smooth ``F`` it grows without bound as ``h`` shrinks.

    Returns
    -------
    dict
        ``estimate`` (sup over ``t``), ``worst_t`` and ``per_t`` values.
    """
    if s <= 0:
        raise ValueError("s must be > 0")
    if t_grid is None:
        # multipliers live on [0, 2]; t ≤ 4/3 keeps tλ inside it on supp η
        t_grid = np.append(2.0 ** np.arange(-12, 0.5, 0.5), 4.0 / 3.0)
    if x_grid is None:
        x_grid = np.linspace(0.5, 1.5, 201)
    x = np.asarray(x_grid, dtype=float)
    m = int(math.floor(s))
    frac = s - m
    per_t = []
    for t in t_grid:
        def gfun(y, t=t):
            return bump(y) * np.asarray(spec(t * np.asarray(y, float)))
        total = 0.0
        top = None
        for j in range(m + 1):
            d = np.abs(_derivative(gfun, x, j, h)) if j else np.abs(gfun(x))
            total += float(d.max())
            if j == m:
                top = _derivative(gfun, x, j, h) if j else gfun(x)
        if frac > 0:
            dx = np.abs(x[:, None] - x[None, :])
            np.fill_diagonal(dx, np.inf)
            q = np.abs(top[:, None] - top[None, :]) / dx ** frac
            total += float(q.max())
        per_t.append(total)
    per_t = np.array(per_t)
    i = int(np.argmax(per_t))
    return {"estimate": float(per_t[i]), "worst_t": float(np.asarray(t_grid)[i]),
            "per_t": per_t.tolist(), "is_estimate": True}


# ----------------------------------------------------------------------
# verifiers

def square_function_SL_abs(g: WeightedGraph, op: MarkovOperator, f: np.ndarray) -> np.ndarray:
    """``S_L f`` for real or complex ``f`` (``S_L`` of the real and imaginary parts in quadrature)."""
    f = np.asarray(f)
    if not np.iscomplexobj(f):
        return square_function_SL(g, op, f)
    return np.hypot(square_function_SL(g, op, f.real), square_function_SL(g, op, f.imag))


def _fitted_D(g, D):
    return fit_doubling(g).D_exponent if D is None else D


def verify_multiplier_hardy(g: WeightedGraph, op: MarkovOperator, p: ExponentFunction,
                            spec: MultiplierSpec, s: float, M: int, trials: int,
                            rng: np.random.Generator, D: float | None = None,
                            eps_grid: Sequence[float] = (0.1, 0.25, 0.5, 1.0),
                            n_atoms: int = 4, rs_cap: float = 1e8) -> VerificationResult:
    """``‖S_L(F(L) f)‖_{p(·)} / ‖S_L f‖_{p(·)}`` plus the molecule step.

    For ``n_atoms`` random ``(2, p(·), 2M)``-atoms ``a = L^{2M} b``,
    ``F(L) a = L^M (F(L) L^M b)`` is checked as a molecule around the
    atom's ball for ``ε = D/p_− + δ``, ``δ`` in ``eps_grid``.  The
    required rescale per ``ε`` is reported; the best certified ``ε`` is the
    largest one whose rescale stays below ``1e3``.

    Raises
    ------
    HypothesisError
        If ``p_+ ≥ 2``, ``s ≤ 2D/p_−`` or the ``R_s`` estimate is not finite.
    """
    if p.p_plus >= 2:
        raise HypothesisError("p_plus < 2", f"p_plus = {p.p_plus:g}")
    D = _fitted_D(g, D)
    if s <= 2 * D / p.p_minus:
        raise HypothesisError("s > 2D/p_minus", f"s = {s:g}, 2D/p_minus = {2 * D / p.p_minus:.4g}")
    rs = estimate_Rs(spec, s)
    if not (np.isfinite(rs["estimate"]) and rs["estimate"] <= rs_cap):
        raise HypothesisError("R_s property", f"estimate = {rs['estimate']:.4g}")
    ratios = []
    for _ in range(trials):
        f = random_function(g, rng, mean_zero_=True)
        den = luxemburg_norm(p, square_function_SL(g, op, f))
        if den == 0:
            ratios.append(math.nan)
            continue
        num = luxemburg_norm(p, square_function_SL_abs(g, op, spectral_multiplier(op, spec, f)))
        ratios.append(num / den)
    sd = spectral_decomposition(op)
    lam = sd.eigenvalues
    Fl = np.asarray(spec(lam))
    scales = {float(e): 0.0 for e in eps_grid}
    for _ in range(n_atoms):
        cert = random_hardy_atom(g, op, p, 2.0, 2 * M, rng)
        bh = sd.coefficients(cert.powers[0]) * Fl * lam ** M
        powers = [sd.synthesize(lam ** k * bh) for k in range(M + 1)]
        for e in eps_grid:
            mol = MoleculeCertificate(powers[-1], powers, cert.ball, 2.0, M, D / p.p_minus + e)
            rep = verify_molecule(g, p, mol)
            scales[float(e)] = max(scales[float(e)], rep.required_scale)
    ok_eps = [e for e, c in scales.items() if c <= 1e3]
    best = D / p.p_minus + max(ok_eps) if ok_eps else math.nan
    return max_ratio("prop-multiplier", ratios,
                     {"multiplier": getattr(spec, "name", "custom"), "s": s, "D": D,
                      "Rs_estimate": rs["estimate"], "molecule_rescale_by_delta": scales,
                      "best_eps": best})


def verify_riesz_hardy(g: WeightedGraph, op: MarkovOperator, p: ExponentFunction, M: int,
                       trials: int, rng: np.random.Generator, n_atoms: int = 0) -> VerificationResult:
    """``‖R_L f‖_{p(·)} / ‖S_L f‖_{p(·)}`` over random mean-zero ``f`` and random ``(2, p(·), M)``-atoms."""
    if p.p_plus >= 2:
        raise HypothesisError("p_plus < 2", f"p_plus = {p.p_plus:g}")
    inputs = [random_function(g, rng, mean_zero_=True) for _ in range(trials)]
    inputs += [random_hardy_atom(g, op, p, 2.0, M, rng).a for _ in range(n_atoms)]
    ratios = []
    for f in inputs:
        den = luxemburg_norm(p, square_function_SL(g, op, f))
        if den == 0:
            ratios.append(math.nan)
            continue
        ratios.append(luxemburg_norm(p, riesz_transform_spectral(g, op, f)) / den)
    return max_ratio("prop-riesz", ratios, {"M": M, "atoms": n_atoms})


def verify_GN_hardy(g: WeightedGraph, op: MarkovOperator, p: ExponentFunction, N: int,
                    trials: int, rng: np.random.Generator) -> VerificationResult:
    """``‖G_{L,N} f‖_{p(·)} / ‖S_L f‖_{p(·)}`` over random mean-zero ``f``."""
    if N < 1:
        raise ValueError("N must be >= 1")
    ratios = []
    for _ in range(trials):
        f = random_function(g, rng, mean_zero_=True)
        den = luxemburg_norm(p, square_function_SL(g, op, f))
        if den == 0:
            ratios.append(math.nan)
            continue
        ratios.append(luxemburg_norm(p, square_function_GN(g, op, f, N)) / den)
    return max_ratio("prop-g", ratios, {"N": N})


def maximal_truncated_area(g: WeightedGraph, op: MarkovOperator, f: np.ndarray,
                           r: float) -> np.ndarray:
    """``𝔠_r f(x) = sup_{B ∋ x} (⨍_B (S_{L, r_B} f)^r dμ)^{1/r}``.

    ``S_{L,R}`` keeps the levels ``k ≤ R`` of the conical square function.
    Balls of every centre and radius ``R ≤ diameter + 1`` are scanned; for
    larger radii the ball is the whole graph and the supremum is attained by
    the untruncated ``S_L``.
    """
    n = g.n_vertices
    Rmax = g.diameter + 1
    F = sl_tent_function(op, np.asarray(f, dtype=float), Rmax).values
    D = g.dist
    S2 = np.zeros(n)
    best = np.zeros(n)
    for R in range(1, Rmax + 1):
        col = F[:, R - 1] ** 2 * g.mu / (R * g.ball_measure(np.arange(n), R))
        S2 += (D < R).astype(float) @ col
        inside = (D < R).astype(float)
        avg = (inside @ (S2 ** (r / 2) * g.mu)) / (inside @ g.mu)
        best = np.maximum(best, np.max(np.where(D < R, avg[None, :], 0.0), axis=1))
    full = square_function_SL(g, op, f)
    whole = float(np.sum(full ** r * g.mu) / g.total_measure)
    return np.maximum(best, whole) ** (1.0 / r)


def verify_weighted_SL(g: WeightedGraph, op: MarkovOperator, w: np.ndarray, q: float,
                       trials: int, rng: np.random.Generator, ap_cap: float = 1e6,
                       rs: Sequence[float] = (1.5, 2.0)) -> VerificationResult:
    """``‖S_L f‖_{L^q(w)} / ‖f‖_{L^q(w)}`` for an ``A_q`` weight.

    Also checks the pointwise domination ``𝔠_r f ≤ C (M(|f|^r))^{1/r}`` for
    each ``r`` in ``rs``; the fitted constants are in ``extra``.

    Raises
    ------
    HypothesisError
        If ``q ∉ (1, ∞)`` or the ``A_q`` constant of ``w`` exceeds ``ap_cap``.
    """
    if not 1 < q < math.inf:
        raise HypothesisError("1 < q < inf", f"q = {q:g}")
    Aq = check_muckenhoupt(g, w, q)
    if not Aq <= ap_cap:
        raise HypothesisError("w in A_q", f"A_q constant = {Aq:.4g}")
    ratios = []
    dom = {float(r): 0.0 for r in rs}
    for _ in range(trials):
        f = random_function(g, rng, mean_zero_=True)
        den = weighted_norm(g, f, q, w)
        if den == 0:
            ratios.append(math.nan)
            continue
        ratios.append(weighted_norm(g, square_function_SL(g, op, f), q, w) / den)
        for r in rs:
            lhs = maximal_truncated_area(g, op, f, r)
            rhs = hl_maximal(g, np.abs(f) ** r) ** (1.0 / r)
            dom[float(r)] = max(dom[float(r)], float(np.max(lhs / rhs)))
    return max_ratio("prop-sl", ratios, {"q": q, "A_q": Aq, "domination_C": dom})
