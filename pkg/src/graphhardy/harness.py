"""Run configurations, check registry and deterministic reports.

A report is a JSON document with sorted keys, written atomically; two runs
with the same configuration produce the same bytes.  Wall-clock timings go
to a separate ``timing.json`` next to it.
"""

from __future__ import annotations

import json
import math
import os
import tempfile
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np
import scipy

from . import __version__
from .atomic import (hardy_atomic_decomposition, molecule_from_tent_atom, random_hardy_atom,
                     random_simple_atom, random_tent_atom, tent_atomic_decomposition,
                     verify_atom_synthesis, verify_equal_lebesgue, verify_hardy_atom,
                     verify_molecular_synthesis, verify_molecule, verify_mplus_bound,
                     verify_simple_atom_bound)
from .graph import (GraphError, WeightedGraph, build_lattice, check_delta_alpha, check_poincare,
                    fit_doubling, read_edge_list, two_lattices_joined)
from .markov import MarkovOperator, fit_composite_bound, fit_gaussian_upper
from .results import HypothesisError
from .sampling import mean_zero, random_function
from .spectral import parse_multiplier, verify_GN_hardy, verify_multiplier_hardy, verify_riesz_hardy, verify_weighted_SL
from .tent import TentFunction
from .varexp import (ExponentFunction, parse_exponent, random_lemma_sum_family,
                     verify_ball_ratios, verify_fefferman_stein, verify_lemma_sum,
                     verify_theorem_A)

__all__ = [
    "SCHEMA_VERSION",
    "CHECKS",
    "UsageError",
    "RunConfig",
    "Context",
    "parse_graph",
    "parse_tolerances",
    "run_checks",
    "write_json_atomic",
    "thread_count",
]

SCHEMA_VERSION = "v1"

#: default tolerances; overridable with ``--tol key=value,...``
DEFAULT_TOL = {
    "cap": 1e4,          # largest acceptable fitted constant
    "residual": 1e-3,    # relative L² reconstruction residual
    "recon": 1e-10,      # pointwise tent reconstruction residual
}


class UsageError(ValueError):
    """Invalid command-line configuration (exit code 2)."""


def parse_graph(spec: str) -> WeightedGraph:
    """Build a graph from ``lattice:DIM:SIDE[:LAZINESS[:torus|reflecting]]``,
    ``twocopies:SIDE`` or ``edges:PATH``."""
    kind, _, rest = spec.partition(":")
    parts = rest.split(":") if rest else []
    try:
        if kind == "lattice":
            if len(parts) < 2 or len(parts) > 4:
                raise UsageError(f"expected lattice:DIM:SIDE[:LAZINESS[:MODE]], got {spec!r}")
            dim, side = int(parts[0]), int(parts[1])
            laziness = float(parts[2]) if len(parts) > 2 else 1.0
            mode = parts[3] if len(parts) > 3 else "torus"
            return build_lattice(dim, side, laziness, mode)
        if kind == "twocopies":
            if len(parts) != 1:
                raise UsageError(f"expected twocopies:SIDE, got {spec!r}")
            return two_lattices_joined(int(parts[0]))
        if kind == "edges":
            if not rest:
                raise UsageError("edges: needs a path")
            return read_edge_list(rest)
    except (GraphError, ValueError) as exc:
        if isinstance(exc, UsageError):
            raise
        raise UsageError(f"bad graph spec {spec!r}: {exc}") from None
    raise UsageError(f"unknown graph kind in {spec!r}")


def parse_tolerances(text: str | None) -> dict:
    tol = dict(DEFAULT_TOL)
    if not text:
        return tol
    for item in text.split(","):
        key, sep, val = item.partition("=")
        key = key.strip()
        if not sep or key not in tol:
            raise UsageError(f"bad tolerance {item!r}; known keys: {', '.join(sorted(tol))}")
        try:
            tol[key] = float(val)
        except ValueError:
            raise UsageError(f"bad tolerance value {val!r}") from None
    return tol


def thread_count() -> int:
    """Worker cap from ``GRAPHHARDY_THREADS`` (default 1)."""
    raw = os.environ.get("GRAPHHARDY_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        raise UsageError(f"GRAPHHARDY_THREADS must be an integer, got {raw!r}") from None


@dataclass
class RunConfig:
    graph: str
    p: str = "constant:2"
    checks: list = field(default_factory=list)
    trials: int = 8
    seed: int = 0
    tol: dict = field(default_factory=lambda: dict(DEFAULT_TOL))
    multiplier: str = "heat:5"


class Context:
    """Lazily computed shared objects for one run."""

    def __init__(self, config: RunConfig):
        self.config = config
        self.graph = parse_graph(config.graph)
        self.op = MarkovOperator(self.graph)
        try:
            self.p = parse_exponent(self.graph, config.p)
        except ValueError as exc:
            raise UsageError(str(exc)) from None
        self._D = None

    @property
    def D(self) -> float:
        if self._D is None:
            self._D = fit_doubling(self.graph).D_exponent
        return self._D

    def rng(self, check: str) -> np.random.Generator:
        """Independent stream per check, derived only from the seed and the check name."""
        key = [ord(c) for c in check]
        ss = np.random.SeedSequence(entropy=self.config.seed, spawn_key=key)
        return np.random.Generator(np.random.Philox(ss))

    @property
    def M(self) -> int:
        return math.ceil(2 * self.D / self.p.p_minus) + 1

    @property
    def r_atom(self) -> float:
        return max(2.0, math.floor(self.p.p_plus) + 1.0)


def _record(passed: bool, fitted: dict, hypotheses: dict | None = None,
            worst: dict | None = None, **extra) -> dict:
    rec = {"passed": bool(passed), "fitted": fitted, "hypotheses": hypotheses or {},
           "worst_case": worst or {}}
    rec.update(extra)
    return rec


def _finite_below(value: float, cap: float) -> bool:
    return bool(np.isfinite(value) and value <= cap)


def _ratio_check(ctx: Context, res, hypotheses=None) -> dict:
    C = res.fitted_C
    return _record(_finite_below(C, ctx.config.tol["cap"]) and res.trials > 0,
                   {"C": C, "trials": res.trials}, hypotheses, res.worst_case, detail=res.extra)


# ----------------------------------------------------------------------
# checks

def _theorem_a(ctx):
    return _ratio_check(ctx, verify_theorem_A(ctx.graph, ctx.p, ctx.config.trials, ctx.rng("theorem-a")),
                        {"p_minus > 1": True})


def _lemma21(ctx):
    return _ratio_check(ctx, verify_fefferman_stein(ctx.graph, ctx.p, 2.0, ctx.config.trials,
                                                    ctx.rng("lemma-2.1")), {"q": 2.0})


def _lemma22(ctx):
    g, p = ctx.graph, ctx.p
    q = ctx.r_atom
    rng = ctx.rng("lemma-2.2")
    ratios = []
    for _ in range(ctx.config.trials):
        lam, blocks, balls = random_lemma_sum_family(g, p, q, 6, rng)
        ratios.append(verify_lemma_sum(g, p, q, lam, blocks, balls))
    C = float(max(ratios)) if ratios else 0.0
    return _record(_finite_below(C, ctx.config.tol["cap"]), {"C": C, "trials": len(ratios)},
                   {"q": q}, {"trial": int(np.argmax(ratios))} if ratios else {})


def _ball_ratios(ctx):
    if not hasattr(ctx, "_ball_ratios"):
        ctx._ball_ratios = verify_ball_ratios(ctx.graph, ctx.p, ctx.p.p_minus / 2,
                                              ctx.p.p_plus + 1, D=ctx.D,
                                              families=ctx.config.trials, rng=ctx.rng("lemma-2.4"))
    return ctx._ball_ratios


def _lemma23(ctx):
    r = _ball_ratios(ctx)
    fitted = {"C_growth": r["C_growth"], "C_shrink": r["C_shrink"]}
    cap = ctx.config.tol["cap"]
    return _record(all(_finite_below(v, cap) for v in fitted.values()), fitted,
                   {"w": ctx.p.p_minus / 2, "q": ctx.p.p_plus + 1, "D": r["D"]},
                   {"growth": r["worst_growth"], "shrink": r["worst_shrink"]})


def _lemma24(ctx):
    r = _ball_ratios(ctx)
    return _record(_finite_below(r["C_aggregate"], ctx.config.tol["cap"]),
                   {"C": r["C_aggregate"]}, {"w": ctx.p.p_minus / 2, "D": r["D"]})


def _thm11(ctx):
    g, p = ctx.graph, ctx.p
    rng = ctx.rng("thm-1.1")
    K = 16
    scales, ratios, recon, ok = [], [], 0.0, True
    for _ in range(ctx.config.trials):
        F = TentFunction(rng.standard_normal((g.n_vertices, K)), g.n_vertices)
        d = tent_atomic_decomposition(g, p, F, q=2.0)
        scales.append(d.rescale_C)
        ratios.append(d.ratio)
        recon = max(recon, d.reconstruction_error)
        ok &= d.support_ok and d.pointwise_ok
    C_rescale = float(max(scales))
    C_ratio = float(max(ratios))
    cap = ctx.config.tol["cap"]
    passed = (ok and recon <= ctx.config.tol["recon"] and _finite_below(C_rescale, cap)
              and _finite_below(C_ratio, cap))
    return _record(passed, {"C_rescale": C_rescale, "C_aggregate": C_ratio,
                            "reconstruction_error": recon, "trials": len(ratios)},
                   {"q": 2.0, "K": K}, {"trial": int(np.argmax(ratios))})


def _hardy_family(ctx, rng, size, M, r):
    certs = [random_hardy_atom(ctx.graph, ctx.op, ctx.p, r, M, rng) for _ in range(size)]
    lam = np.abs(rng.standard_normal(size)) + 0.01
    return lam, certs


def _thm12a(ctx):
    rng = ctx.rng("thm-1.2a")
    M, r = ctx.M, ctx.r_atom
    fams = [_hardy_family(ctx, rng, int(rng.integers(1, 5)), M, r) for _ in range(ctx.config.trials)]
    return _ratio_check(ctx, verify_atom_synthesis(ctx.graph, ctx.op, ctx.p, fams, r, M, D=ctx.D),
                        {"r": r, "M": M, "D": ctx.D})


def _thm12b(ctx):
    g, op, p = ctx.graph, ctx.op, ctx.p
    rng = ctx.rng("thm-1.2b")
    M, r = ctx.M, ctx.r_atom
    ratios, resid, certs_ok, scales = [], 0.0, True, []
    for _ in range(ctx.config.trials):
        f = mean_zero(g, random_function(g, rng, kind="gaussian"))
        d = hardy_atomic_decomposition(g, op, p, f, r, M, D=ctx.D)
        ratios.append(d.ratio)
        scales.append(d.rescale_C)
        resid = max(resid, d.relative_residual)
        certs_ok &= all(verify_hardy_atom(g, op, p, c, support_rtol=1e-8)["passed"]
                        for c in d.certificates)
    C = float(max(ratios))
    passed = certs_ok and resid <= ctx.config.tol["residual"] and _finite_below(C, ctx.config.tol["cap"])
    return _record(passed, {"C": C, "C_rescale": float(max(scales)), "max_relative_residual": resid,
                            "trials": len(ratios)},
                   {"r": r, "M": M, "D": ctx.D}, {"trial": int(np.argmax(ratios))},
                   certificates_passed=bool(certs_ok))


def _thm14(ctx):
    g, op, p = ctx.graph, ctx.op, ctx.p
    rng = ctx.rng("thm-1.4")
    M, q = ctx.M, ctx.r_atom
    eps = ctx.D / p.p_minus + 0.5
    fams, scales = [], []
    for _ in range(ctx.config.trials):
        size = int(rng.integers(1, 4))
        certs = []
        for _ in range(size):
            payload, ball = random_tent_atom(g, p, q, rng)
            mol = molecule_from_tent_atom(g, op, payload, ball, q, M, eps)
            scales.append(verify_molecule(g, p, mol).required_scale)
            certs.append(mol)
        fams.append((np.abs(rng.standard_normal(size)) + 0.01, certs))
    C_mol = float(max(scales))
    for _, certs in fams:
        for c in certs:
            c.m = c.m / C_mol
            c.powers = [u / C_mol for u in c.powers]
    all_ok = all(verify_molecule(g, p, c).passed for _, cs in fams for c in cs)
    res = verify_molecular_synthesis(g, op, p, fams, q, M, eps, D=ctx.D)
    cap = ctx.config.tol["cap"]
    return _record(all_ok and _finite_below(res.fitted_C, cap) and _finite_below(C_mol, cap),
                   {"C": res.fitted_C, "C_rescale": C_mol, "trials": res.trials},
                   {"q": q, "M": M, "eps": eps, "D": ctx.D}, res.worst_case,
                   molecules_passed=bool(all_ok))


def _prop_equal(ctx):
    res = verify_equal_lebesgue(ctx.graph, ctx.op, ctx.p, ctx.config.trials, ctx.rng("prop-equal"))
    return _ratio_check(ctx, res, {"p_minus > 1": True})


def _prop_sl(ctx):
    g = ctx.graph
    w = (1.0 + g.dist[0].astype(float)) ** 0.5
    return _ratio_check(ctx, verify_weighted_SL(g, ctx.op, w, 2.0, ctx.config.trials,
                                                ctx.rng("prop-sl")),
                        {"weight": "(1 + d(x, 0))^0.5", "q": 2.0})


def _prop_mplus(ctx):
    rng = ctx.rng("prop-m+")
    fs = [random_function(ctx.graph, rng, mean_zero_=True) for _ in range(ctx.config.trials)]
    return _ratio_check(ctx, verify_mplus_bound(ctx.graph, ctx.op, ctx.p, fs))


def _prop_simple(ctx):
    rng = ctx.rng("prop-simple-atom")
    fams = []
    for _ in range(ctx.config.trials):
        size = int(rng.integers(1, 5))
        fams.append((np.abs(rng.standard_normal(size)) + 0.01,
                     [random_simple_atom(ctx.graph, ctx.p, rng) for _ in range(size)]))
    return _ratio_check(ctx, verify_simple_atom_bound(ctx.graph, ctx.op, ctx.p, fams, D=ctx.D))


def _prop_g(ctx):
    return _ratio_check(ctx, verify_GN_hardy(ctx.graph, ctx.op, ctx.p, 2, ctx.config.trials,
                                             ctx.rng("prop-g")), {"N": 2})


def _prop_multiplier(ctx):
    try:
        spec = parse_multiplier(ctx.config.multiplier)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    s = 2 * ctx.D / ctx.p.p_minus + 1
    res = verify_multiplier_hardy(ctx.graph, ctx.op, ctx.p, spec, s, ctx.M, ctx.config.trials,
                                  ctx.rng("prop-multiplier"), D=ctx.D)
    return _ratio_check(ctx, res, {"s": s, "M": ctx.M})


def _prop_riesz(ctx):
    res = verify_riesz_hardy(ctx.graph, ctx.op, ctx.p, ctx.M, ctx.config.trials,
                             ctx.rng("prop-riesz"), n_atoms=max(1, ctx.config.trials // 4))
    return _ratio_check(ctx, res, {"M": ctx.M})


def _kernel_horizon(g):
    return int(min(256, max(4, (g.diameter // 2) ** 2)))


def _hyp_ue(ctx):
    fit = fit_gaussian_upper(ctx.op, _kernel_horizon(ctx.graph))
    return _record(fit.max_violation <= 0 and _finite_below(fit.C, ctx.config.tol["cap"]),
                   {"C": fit.C, "c": fit.c, "max_violation": fit.max_violation},
                   {"horizon": fit.horizon}, {"n_x_y": list(fit.worst)})


def _hyp_compuesto(ctx):
    fit = fit_composite_bound(ctx.op, _kernel_horizon(ctx.graph), 1)
    return _record(fit.max_violation <= 0 and _finite_below(fit.C, ctx.config.tol["cap"]),
                   {"C": fit.C, "c": fit.c, "max_violation": fit.max_violation},
                   {"horizon": fit.horizon, "k": 1}, {"n_x_y": list(fit.worst)})


def _hyp_poincare(ctx):
    g = ctx.graph
    rep = check_poincare(g, (1, max(1, min(8, g.diameter // 4))), trials=4, rng=ctx.rng("hyp-poincare"))
    try:
        alpha = check_delta_alpha(g)
    except GraphError:
        alpha = 0.0
    return _record(_finite_below(rep.C, ctx.config.tol["cap"]),
                   {"C": rep.C, "random_lower": rep.random_lower, "delta_alpha": alpha},
                   {}, {"ball": [rep.worst_ball.center, rep.worst_ball.radius]})


CHECKS: dict[str, Callable[[Context], dict]] = {
    "theorem-a": _theorem_a,
    "lemma-2.1": _lemma21,
    "lemma-2.2": _lemma22,
    "lemma-2.3": _lemma23,
    "lemma-2.4": _lemma24,
    "thm-1.1": _thm11,
    "thm-1.2a": _thm12a,
    "thm-1.2b": _thm12b,
    "thm-1.4": _thm14,
    "prop-equal": _prop_equal,
    "prop-sl": _prop_sl,
    "prop-m+": _prop_mplus,
    "prop-simple-atom": _prop_simple,
    "prop-g": _prop_g,
    "prop-multiplier": _prop_multiplier,
    "prop-riesz": _prop_riesz,
    "hyp-ue": _hyp_ue,
    "hyp-compuesto": _hyp_compuesto,
    "hyp-poincare": _hyp_poincare,
}


def _run_one(ctx: Context, name: str) -> tuple[dict, float]:
    t0 = time.perf_counter()
    try:
        rec = CHECKS[name](ctx)
        rec["status"] = "pass" if rec["passed"] else "fail"
    except HypothesisError as exc:
        rec = _record(False, {}, {"violated": exc.hypothesis}, status="precondition",
                      message=str(exc))
    rec["name"] = name
    return rec, time.perf_counter() - t0


def run_checks(config: RunConfig) -> tuple[dict, dict]:
    """Run the selected checks; returns ``(report, timings)``.

    Raises
    ------
    UsageError
        For an empty or unknown selector list or a bad graph/exponent spec.
    """
    if not config.checks:
        raise UsageError("no checks selected; use --check NAME (repeatable) or --check all")
    unknown = [c for c in config.checks if c not in CHECKS]
    if unknown:
        raise UsageError(f"unknown check(s): {', '.join(unknown)}; known: {', '.join(CHECKS)}")
    if config.trials < 1:
        raise UsageError("--trials must be >= 1")
    ctx = Context(config)
    names = list(dict.fromkeys(config.checks))
    workers = min(thread_count(), len(names))
    if workers > 1:
        _ = ctx.D                               # shared state computed before dispatch
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(lambda n: _run_one(ctx, n), names))
    else:
        results = [_run_one(ctx, n) for n in names]
    records = [r for r, _ in results]
    report = {
        "schema": SCHEMA_VERSION,
        "config": {"graph": config.graph, "p": config.p, "checks": names,
                   "trials": config.trials, "seed": config.seed, "tol": config.tol,
                   "multiplier": config.multiplier},
        "graph": {"vertices": ctx.graph.n_vertices, "diameter": ctx.graph.diameter,
                  "boundary_mode": ctx.graph.boundary_mode},
        "exponent": ctx.p.describe(),
        "versions": {"graphhardy": __version__, "numpy": np.__version__, "scipy": scipy.__version__},
        "checks": records,
        "passed": all(r["status"] == "pass" for r in records),
    }
    timings = {"checks": {r["name"]: t for r, t in results},
               "total": sum(t for _, t in results)}
    return report, timings


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, np.generic):
        obj = obj.item()
    if isinstance(obj, float) and not math.isfinite(obj):
        return repr(obj)
    return obj


def dumps(obj) -> str:
    return json.dumps(_jsonable(obj), sort_keys=True, indent=2, allow_nan=False) + "\n"


def write_json_atomic(obj, path: str | Path) -> Path:
    """Write JSON (sorted keys) through a temporary file and ``os.replace``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(dumps(obj))
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def write_text_atomic(text: str, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
    with os.fdopen(fd, "w") as fh:
        fh.write(text)
    os.replace(tmp, path)
    return path


def asdict_config(config: RunConfig) -> dict:
    return asdict(config)
