"""Variable exponent Lebesgue spaces L^{p(·)}(Γ) and maximal-function estimates.

The modular is ``ρ(f) = Σ_x |f(x)|^{p(x)} μ(x)`` and the Luxemburg quasinorm
``‖f‖_{p(·)} = inf{λ > 0 : ρ(f / λ) ≤ 1}``.  On a finite graph the infimum is
attained, so the norm is the unique root of ``ρ(f / λ) = 1``; it is located by
a monotone Newton iteration on ``log λ`` with the modular evaluated as a
log-sum-exp.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.special import logsumexp

from .graph import Ball, WeightedGraph, fit_doubling
from .results import HypothesisError, VerificationResult, max_ratio
from .sampling import random_ball, random_function

__all__ = [
    "ExponentFunction",
    "LogHolder",
    "ExponentParseError",
    "read_exponent_file",
    "parse_exponent",
    "modular",
    "luxemburg_norm",
    "luxemburg_norm_batch",
    "ball_indicator_norm",
    "hl_maximal",
    "aggregate_A",
    "verify_theorem_A",
    "verify_fefferman_stein",
    "verify_lemma_sum",
    "random_lemma_sum_family",
    "verify_ball_ratios",
    "check_muckenhoupt",
    "weighted_norm",
]


class ExponentParseError(ValueError):
    """Malformed exponent specification."""


@dataclass(frozen=True)
class LogHolder:
    """Constants of the two log-Hölder conditions on ``1/p``.

    ``|1/p(x) − 1/p(y)| ≤ C_local / log(e + 1/d(x, y))`` and
    ``|1/p(x) − a| ≤ C_decay / log(e + d(x, x0))``.
    """

    C_local: float
    C_decay: float
    a: float
    x0: int


class ExponentFunction:
    """An exponent ``p: Γ → (0, ∞)`` with cached extremes.

    Parameters
    ----------
    graph : WeightedGraph
    values : array_like, shape (n_vertices,)
    name : str, optional
        Label used in reports.
    limit : float, optional
        Limit value ``p_∞`` at infinity (used for the decay constant).
        Defaults to ``p(x0)`` for ``x0`` the farthest vertex from 0.
    x0 : int
        Reference vertex for the decay condition.
    """

    def __init__(self, graph: WeightedGraph, values, name: str = "table",
                 limit: float | None = None, x0: int = 0):
        v = np.asarray(values, dtype=float)
        if v.shape != (graph.n_vertices,):
            raise ExponentParseError(
                f"exponent needs {graph.n_vertices} values, got shape {v.shape}")
        if not np.all(np.isfinite(v)) or np.any(v <= 0):
            raise ExponentParseError("exponent values must be finite and positive")
        v = v.copy()
        v.setflags(write=False)
        self.graph = graph
        self.values = v
        self.name = name
        self.p_minus = float(v.min())
        self.p_plus = float(v.max())
        self.frak_p = min(1.0, self.p_minus)
        self.x0 = int(x0)
        self._limit = limit
        self._logholder = None
        self._ball_norms: dict[tuple[int, int], float] = {}

    # -- constructors --------------------------------------------------
    @classmethod
    def constant(cls, graph: WeightedGraph, q: float) -> "ExponentFunction":
        return cls(graph, np.full(graph.n_vertices, float(q)), name=f"constant:{q:g}", limit=q)

    @classmethod
    def log_family(cls, graph: WeightedGraph, a: float, b: float, x0: int = 0) -> "ExponentFunction":
        """``p(x) = a + b / log(e + d(x, x0))``, log-Hölder with limit ``a``."""
        vals = a + b / np.log(math.e + graph.dist[x0])
        return cls(graph, vals, name=f"log:{a:g}:{b:g}:{x0}", limit=a, x0=x0)

    @property
    def is_constant(self) -> bool:
        return self.p_minus == self.p_plus

    @property
    def logholder(self) -> LogHolder:
        """Exact log-Hölder constants on the finite graph (computed on demand)."""
        if self._logholder is None:
            g = self.graph
            inv = 1.0 / self.values
            D = g.dist.astype(float)
            off = D > 0
            diff = np.abs(inv[:, None] - inv[None, :])
            C_local = float(np.max(np.where(off, diff * np.log(math.e + 1.0 / np.where(off, D, 1.0)),
                                            0.0), initial=0.0))
            lim = self._limit
            if lim is None:
                lim = float(self.values[int(np.argmax(g.dist[self.x0]))])
            a = 1.0 / lim
            C_decay = float(np.max(np.abs(inv - a) * np.log(math.e + D[self.x0])))
            self._logholder = LogHolder(C_local, C_decay, a, self.x0)
        return self._logholder

    def scaled(self, factor: float) -> "ExponentFunction":
        """The exponent ``p(·) · factor`` (e.g. ``p/w``)."""
        lim = None if self._limit is None else self._limit * factor
        return ExponentFunction(self.graph, self.values * factor, name=f"{self.name}*{factor:g}",
                                limit=lim, x0=self.x0)

    def describe(self) -> dict:
        return {"name": self.name, "p_minus": self.p_minus, "p_plus": self.p_plus,
                "frak_p": self.frak_p}

    def __repr__(self) -> str:
        return f"ExponentFunction({self.name}, p_-={self.p_minus:.4g}, p_+={self.p_plus:.4g})"


def parse_exponent(graph: WeightedGraph, spec: str) -> ExponentFunction:
    """Parse ``constant:Q``, ``log:A:B[:X0]`` or ``file:PATH``."""
    kind, _, rest = spec.partition(":")
    try:
        if kind == "constant":
            return ExponentFunction.constant(graph, float(rest))
        if kind in ("log", "logfamily"):
            parts = rest.split(":")
            x0 = int(parts[2]) if len(parts) > 2 else 0
            return ExponentFunction.log_family(graph, float(parts[0]), float(parts[1]), x0)
        if kind == "file":
            return read_exponent_file(graph, rest)
    except (IndexError, ValueError) as exc:
        if isinstance(exc, ExponentParseError):
            raise
        raise ExponentParseError(f"bad exponent spec {spec!r}: {exc}") from None
    raise ExponentParseError(f"unknown exponent kind in {spec!r}")


def read_exponent_file(graph: WeightedGraph, path: str | Path) -> ExponentFunction:
    """Read an exponent file.

    The file holds ``key=value`` lines, starting with ``kind=constant``,
    ``kind=logfamily`` or ``kind=table``.  Constants take ``value=Q``; the
    log family takes ``a=``, ``b=`` and optionally ``x0=``; tables list one
    ``x p(x)`` pair per line for every vertex.  ``#`` starts a comment.
    """
    keys: dict[str, str] = {}
    table: dict[int, float] = {}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" in line:
                k, _, v = line.partition("=")
                keys[k.strip()] = v.strip()
                continue
            parts = line.split()
            try:
                if len(parts) != 2:
                    raise ValueError
                table[int(parts[0])] = float(parts[1])
            except ValueError:
                raise ExponentParseError(f"{path}:{lineno}: expected 'x p(x)', got {line!r}") from None
    kind = keys.get("kind")
    try:
        if kind == "constant":
            return ExponentFunction.constant(graph, float(keys["value"]))
        if kind == "logfamily":
            return ExponentFunction.log_family(graph, float(keys["a"]), float(keys["b"]),
                                               int(keys.get("x0", 0)))
        if kind == "table":
            missing = [x for x in range(graph.n_vertices) if x not in table]
            if missing:
                raise ExponentParseError(f"{path}: no exponent for vertex {missing[0]}")
            return ExponentFunction(graph, [table[x] for x in range(graph.n_vertices)],
                                    name=f"file:{Path(path).name}")
    except KeyError as exc:
        raise ExponentParseError(f"{path}: missing key {exc.args[0]!r}") from None
    raise ExponentParseError(f"{path}: unknown or missing kind {kind!r}")


# ----------------------------------------------------------------------
# modular and norm

def modular(p: ExponentFunction, f: np.ndarray) -> float:
    """``ρ_{p(·)}(f) = Σ_x |f(x)|^{p(x)} μ(x)``."""
    f = np.abs(np.asarray(f, dtype=float))
    return float(np.sum(f ** p.values * p.graph.mu))


def luxemburg_norm_batch(p: ExponentFunction, F: np.ndarray, tol: float = 1e-15,
                         max_iter: int = 200) -> np.ndarray:
    """Luxemburg norms of every row of ``F`` (shape ``(m, n_vertices)``).

    With ``t = log λ``, ``g(t) = log ρ(f e^{-t})`` is a log-sum-exp of affine
    functions, hence convex and strictly decreasing.  Newton's method started
    left of the root therefore increases monotonically to it; a final
    upward nudge makes ``ρ(f / ‖f‖) ≤ 1`` hold for the directly summed
    modular as well.
    """
    F = np.abs(np.atleast_2d(np.asarray(F, dtype=float)))
    m = F.shape[0]
    out = np.zeros(m)
    pv = p.values
    mu = p.graph.mu
    logmu = np.log(mu)
    nz_rows = np.flatnonzero(F.max(axis=1) > 0)
    if nz_rows.size == 0:
        return out
    A = F[nz_rows]
    # the norm is positively homogeneous: solve for max-normalised rows so that
    # t = log λ stays O(log n) and keeps full relative precision
    scale = A.max(axis=1)
    with np.errstate(divide="ignore"):
        logf = np.log(A / scale[:, None])
    # per-term exponent: log μ + p (log|f| − t); the modular is their log-sum-exp
    support = np.isfinite(logf)
    base = np.where(support, logmu[None, :] + pv[None, :] * logf, -np.inf)
    single = np.where(support, logmu[None, :] / pv[None, :] + logf, -np.inf)
    t = single.max(axis=1)                                    # ρ ≥ 1 here
    t = t - 1e-12 * np.maximum(1.0, np.abs(t))

    def logrho(t):
        return logsumexp(base - pv[None, :] * t[:, None], axis=1)

    for _ in range(60):                 # guard the start against rounding
        bad = logrho(t) < 0
        if not bad.any():
            break
        t = np.where(bad, t - np.maximum(1.0, np.abs(t)), t)
    for _ in range(max_iter):
        v = base - pv[None, :] * t[:, None]
        lse = logsumexp(v, axis=1)
        slope = -np.sum(np.exp(v - lse[:, None]) * pv[None, :], axis=1)
        step = -lse / slope
        t = t + step
        if np.all(np.abs(step) <= tol * np.maximum(1.0, np.abs(t))):
            break
    for _ in range(200):
        bad = logrho(t) > 0
        if not bad.any():
            break
        t = np.where(bad, t + np.spacing(np.maximum(1.0, np.abs(t))), t)
    norms = np.exp(t) * scale
    ulp = 2 * np.finfo(float).eps
    # near the subnormal range one ulp of the norm is a large relative step;
    # there only the log-space guarantee is kept
    normal = norms > np.finfo(float).tiny / np.finfo(float).eps
    for _ in range(200):
        over = normal & (np.sum((A / norms[:, None]) ** pv[None, :] * mu[None, :], axis=1) > 1)
        if not over.any():
            break
        norms = np.where(over, norms * (1 + ulp), norms)
    out[nz_rows] = norms
    return out


def luxemburg_norm(p: ExponentFunction, f: np.ndarray) -> float:
    """``‖f‖_{p(·)} = inf{λ > 0 : ρ(f / λ) ≤ 1}``; zero for ``f = 0``."""
    return float(luxemburg_norm_batch(p, np.asarray(f)[None, :])[0])


def weighted_norm(g: WeightedGraph, f: np.ndarray, q: float, w: np.ndarray | None = None) -> float:
    """``(Σ |f|^q w μ)^{1/q}`` (``w = 1`` by default)."""
    f = np.abs(np.asarray(f, dtype=float))
    w = 1.0 if w is None else w
    return float(np.sum(f ** q * w * g.mu) ** (1.0 / q))


def ball_indicator_norm(p: ExponentFunction, b: Ball) -> float:
    """``‖χ_B‖_{p(·)}``, memoised per ball."""
    key = (b.center, min(b.radius, p.graph.n_radii))
    val = p._ball_norms.get(key)
    if val is None:
        val = luxemburg_norm(p, b.mask(p.graph).astype(float))
        p._ball_norms[key] = val
    return val


def _ball_indicator_norms(p: ExponentFunction, balls: Sequence[Ball]) -> np.ndarray:
    g = p.graph
    keys = [(b.center, min(b.radius, g.n_radii)) for b in balls]
    todo = sorted({k for k in keys if k not in p._ball_norms})
    if todo:
        masks = np.array([g.dist[c] < r for c, r in todo], dtype=float)
        for k, v in zip(todo, luxemburg_norm_batch(p, masks)):
            p._ball_norms[k] = float(v)
    return np.array([p._ball_norms[k] for k in keys])


# ----------------------------------------------------------------------
# maximal function

def hl_maximal(g: WeightedGraph, f: np.ndarray, max_radius: int | None = None) -> np.ndarray:
    """Centred Hardy–Littlewood maximal function.

    ``Mf(x) = sup_{r ≥ 1} μ(B(x, r))^{-1} Σ_{y ∈ B(x, r)} |f(y)| μ(y)``, the
    supremum running over radii up to ``max_radius`` (default: every radius,
    up to the ball covering the whole graph).
    """
    S = g.ball_sums(np.abs(np.asarray(f, dtype=float)) * g.mu)
    avg = S / g.ball_measures
    if max_radius is not None:
        avg = avg[:, : max(1, int(max_radius))]
    return avg.max(axis=1)


def aggregate_A(p: ExponentFunction, lambdas: Sequence[float], balls: Sequence[Ball]) -> float:
    """``‖(Σ_j (|λ_j| χ_{B_j} / ‖χ_{B_j}‖_{p(·)})^𝔭)^{1/𝔭}‖_{p(·)}``."""
    lam = np.abs(np.asarray(lambdas, dtype=float))
    if lam.size == 0 or not np.any(lam):
        return 0.0
    balls = list(balls)
    keep = lam > 0
    lam = lam[keep]
    balls = [b for b, k in zip(balls, keep) if k]
    g = p.graph
    norms = _ball_indicator_norms(p, balls)
    fp = p.frak_p
    acc = np.zeros(g.n_vertices)
    for l, b, nb in zip(lam, balls, norms):
        acc[b.mask(g)] += (l / nb) ** fp
    return luxemburg_norm(p, acc ** (1.0 / fp))


# ----------------------------------------------------------------------
# verifiers

def _require_p_minus_gt1(p: ExponentFunction):
    if p.p_minus <= 1:
        raise HypothesisError("p_minus > 1", f"p_minus = {p.p_minus:g}")


def verify_theorem_A(g: WeightedGraph, p: ExponentFunction, trials: int,
                     rng: np.random.Generator) -> VerificationResult:
    """Empirical operator norm of ``M`` on ``L^{p(·)}``: max ``‖Mf‖ / ‖f‖``."""
    _require_p_minus_gt1(p)
    fs = np.array([random_function(g, rng) for _ in range(trials)])
    Ms = np.array([hl_maximal(g, f) for f in fs])
    ratios = luxemburg_norm_batch(p, Ms) / luxemburg_norm_batch(p, fs)
    return max_ratio("theorem-a", ratios, {"p": p.describe()})


def verify_fefferman_stein(g: WeightedGraph, p: ExponentFunction, q: float, trials: int,
                           rng: np.random.Generator, family_size: int = 8) -> VerificationResult:
    """Vector-valued maximal inequality: ``‖(Σ (Mf_j)^q)^{1/q}‖ / ‖(Σ |f_j|^q)^{1/q}‖``."""
    _require_p_minus_gt1(p)
    if not 1 < q < math.inf:
        raise HypothesisError("1 < q < inf", f"q = {q:g}")
    num, den = [], []
    for _ in range(trials):
        fam = np.array([random_function(g, rng) for _ in range(family_size)])
        Mf = np.array([hl_maximal(g, f) for f in fam])
        num.append(np.sum(Mf ** q, axis=0) ** (1 / q))
        den.append(np.sum(np.abs(fam) ** q, axis=0) ** (1 / q))
    ratios = luxemburg_norm_batch(p, np.array(num)) / luxemburg_norm_batch(p, np.array(den))
    return max_ratio("lemma-2.1", ratios, {"p": p.describe(), "q": q, "family_size": family_size})


class LemmaInputError(ValueError):
    """An input block violates the support or size requirement."""

    def __init__(self, index: int, reason: str):
        super().__init__(f"block {index}: {reason}")
        self.index = index


def _lq_norm(g, f, q):
    f = np.abs(f)
    if math.isinf(q):
        return float(f.max(initial=0.0))
    return float(np.sum(f ** q * g.mu) ** (1 / q))


def verify_lemma_sum(g: WeightedGraph, p: ExponentFunction, q: float, lambdas, blocks,
                     balls: Sequence[Ball], rtol: float = 1e-9) -> float:
    """Ratio ``‖(Σ |λ_j a_j|^𝔭)^{1/𝔭}‖_{p(·)} / 𝒜({λ_j}, {B_j})`` for one family.

    Each block must satisfy ``supp a_j ⊂ B_j`` and
    ``‖a_j‖_q ≤ μ(B_j)^{1/q} ‖χ_{B_j}‖_{p(·)}^{-1}``.  Returns 0 when every
    ``λ_j`` is zero.

    Raises
    ------
    HypothesisError
        If ``q < 1`` or ``q ≤ p_+``.
    LemmaInputError
        For the first block violating a requirement.
    """
    if q < 1 or q <= p.p_plus:
        raise HypothesisError("q >= 1 and q > p_plus", f"q = {q:g}, p_plus = {p.p_plus:g}")
    lam = np.abs(np.asarray(lambdas, dtype=float))
    blocks = np.atleast_2d(np.asarray(blocks, dtype=float))
    for j, (a, b) in enumerate(zip(blocks, balls)):
        if np.any(a[~b.mask(g)] != 0):
            raise LemmaInputError(j, "support not contained in its ball")
        mB = b.measure(g)
        limit = (1.0 if math.isinf(q) else mB ** (1 / q)) / ball_indicator_norm(p, b)
        if _lq_norm(g, a, q) > limit * (1 + rtol):
            raise LemmaInputError(j, "size bound violated")
    if not np.any(lam):
        return 0.0
    fp = p.frak_p
    lhs = luxemburg_norm(p, np.sum(np.abs(lam[:, None] * blocks) ** fp, axis=0) ** (1 / fp))
    return lhs / aggregate_A(p, lam, balls)


def random_lemma_sum_family(g: WeightedGraph, p: ExponentFunction, q: float, size: int,
                            rng: np.random.Generator, max_radius: int | None = None):
    """Random admissible ``(λ_j, a_j, B_j)`` blocks saturating the size bound."""
    lambdas, blocks, balls = [], [], []
    for _ in range(size):
        b = random_ball(g, rng, max_radius)
        mask = b.mask(g)
        a = np.where(mask, np.abs(rng.standard_normal(g.n_vertices)) + 0.1, 0.0)
        limit = (1.0 if math.isinf(q) else b.measure(g) ** (1 / q)) / ball_indicator_norm(p, b)
        a *= limit / _lq_norm(g, a, q) * (1 - 1e-12)
        lambdas.append(abs(rng.standard_normal()) + 0.01)
        blocks.append(a)
        balls.append(b)
    return np.array(lambdas), np.array(blocks), balls


def verify_ball_ratios(g: WeightedGraph, p: ExponentFunction, w_param: float, q: float,
                       betas: Sequence[float] = (1, 2, 4, 8, 16), radii: Sequence[int] | None = None,
                       centers: Sequence[int] | None = None, D: float | None = None,
                       families: int = 8, rng: np.random.Generator | None = None) -> dict:
    """Worst constants of the ball-dilation estimates for ``‖χ_B‖_{p(·)}``.

    Returns a dict with

    * ``C_growth``: max of ``‖χ_{B(x,βr)}‖ / ‖χ_{B(x,r)}‖ / β^{D/w}``;
    * ``C_shrink``: max of ``‖χ_{B(x,r)}‖ / ‖χ_{B(x,βr)}‖ / (μ(B(x,r))/μ(B(x,βr)))^{1/q}``;
    * ``C_aggregate``: max of ``𝒜({λ}, {βB}) / (β^{D/w} 𝒜({λ}, {B}))`` on random families.
    """
    if not 0 < w_param < p.p_minus:
        raise HypothesisError("0 < w < p_minus", f"w = {w_param:g}")
    if not (1 <= q < math.inf and q > p.p_plus):
        raise HypothesisError("q in [1, inf) and q > p_plus", f"q = {q:g}")
    if D is None:
        D = fit_doubling(g).D_exponent
    if radii is None:
        radii = sorted({1, 2, 3, 4, max(1, g.diameter // 8), max(1, g.diameter // 4)})
    if centers is None:
        centers = np.linspace(0, g.n_vertices - 1, min(g.n_vertices, 8)).astype(int)
    growth, shrink = [], []
    worst_g = worst_s = None
    for x in centers:
        for r in radii:
            small = Ball(int(x), r)
            ns = ball_indicator_norm(p, small)
            ms = small.measure(g)
            for beta in betas:
                big = Ball(int(x), math.ceil(beta * r - 1e-12))
                nb = ball_indicator_norm(p, big)
                mb = big.measure(g)
                cg = nb / ns / beta ** (D / w_param)
                cs = ns / nb / (ms / mb) ** (1 / q)
                if worst_g is None or cg > max(growth):
                    worst_g = (int(x), r, beta)
                if worst_s is None or cs > max(shrink):
                    worst_s = (int(x), r, beta)
                growth.append(cg)
                shrink.append(cs)
    rng = np.random.default_rng(0) if rng is None else rng
    agg = []
    for _ in range(families):
        m = int(rng.integers(1, 9))
        balls = [random_ball(g, rng, max(1, g.diameter // 8)) for _ in range(m)]
        lam = np.abs(rng.standard_normal(m)) + 0.01
        base = aggregate_A(p, lam, balls)
        for beta in betas:
            dil = [Ball(b.center, math.ceil(beta * b.radius - 1e-12)) for b in balls]
            agg.append(aggregate_A(p, lam, dil) / (beta ** (D / w_param) * base))
    return {"C_growth": float(max(growth)), "C_shrink": float(max(shrink)),
            "C_aggregate": float(max(agg)) if agg else 0.0, "D": float(D),
            "worst_growth": worst_g, "worst_shrink": worst_s}


def check_muckenhoupt(g: WeightedGraph, w: np.ndarray, r: float) -> float:
    """Exact ``A_r`` constant of the weight ``w`` over every ball.

    For ``r > 1`` this is ``sup_B ⟨w⟩_B ⟨w^{1-r'}⟩_B^{r-1}``; for ``r = 1`` it
    is ``sup_B ⟨w⟩_B / min_B w``, averages taken with respect to ``μ``.
    """
    w = np.asarray(w, dtype=float)
    if r < 1:
        raise ValueError("r must be >= 1")
    if np.any(w <= 0):
        raise ValueError("weights must be positive")
    V = g.ball_measures
    avg_w = g.ball_sums(w * g.mu) / V
    if r == 1:
        order = np.argsort(g.dist, axis=1, kind="stable")
        cm = np.minimum.accumulate(w[order], axis=1)
        counts = np.cumsum(np.apply_along_axis(np.bincount, 1, g.dist, minlength=g.n_radii), axis=1)
        mins = np.take_along_axis(cm, counts - 1, axis=1)
        return float(np.max(avg_w / mins))
    rp = r / (r - 1)
    avg_dual = g.ball_sums(w ** (1 - rp) * g.mu) / V
    return float(np.max(avg_w * avg_dual ** (r - 1)))
