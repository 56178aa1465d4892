"""``graphhardy`` command-line interface.

Subcommands
-----------
verify
    Run theorem/hypothesis checks and write ``report.json``.
decompose
    Atomic decomposition of a vertex function (Hardy atoms) or of a tent
    function (tent atoms).
heatmap
    Heat-kernel rows with the fitted Gaussian bound and its slack.

Exit codes: 0 success, 1 a check failed, 2 usage or precondition error.
"""

from __future__ import annotations

import argparse
import math
import sys
from pathlib import Path

import numpy as np

from .atomic import hardy_atomic_decomposition, tent_atomic_decomposition
from .graph import fit_doubling
from .harness import (CHECKS, Context, RunConfig, UsageError, dumps, parse_graph,
                      parse_tolerances, run_checks, write_json_atomic, write_text_atomic)
from .markov import MarkovOperator, fit_gaussian_upper, write_heat_kernel_csv
from .results import HypothesisError
from .tent import read_tent_csv
from .varexp import parse_exponent

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


def read_vertex_function(path: str | Path, n_vertices: int) -> np.ndarray:
    """Read ``x value`` rows (``#`` comments); missing vertices are zero."""
    f = np.zeros(n_vertices)
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.replace(",", " ").split()
            try:
                if len(parts) != 2:
                    raise ValueError
                x, v = int(parts[0]), float(parts[1])
            except ValueError:
                raise UsageError(f"{path}:{lineno}: expected 'x value', got {line!r}") from None
            if not 0 <= x < n_vertices:
                raise UsageError(f"{path}:{lineno}: vertex {x} out of range")
            f[x] = v
    return f


def _split_checks(values: list[str] | None) -> list[str]:
    out = []
    for v in values or []:
        for item in v.split(","):
            item = item.strip()
            if item == "all":
                out.extend(CHECKS)
            elif item:
                out.append(item)
    return out


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="graphhardy",
                                     description="Variable-exponent Hardy-space toolkit on weighted graphs")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--graph", required=True,
                       help="lattice:DIM:SIDE[:LAZINESS[:torus|reflecting]], twocopies:SIDE or edges:PATH")
        p.add_argument("--p", default="constant:2", help="constant:Q, log:A:B[:X0] or file:PATH")
        p.add_argument("--out", default=None, help="output directory")

    v = sub.add_parser("verify", help="run theorem and hypothesis checks")
    common(v)
    v.add_argument("--check", action="append",
                   help=f"check name (repeatable, comma-separated, or 'all'): {', '.join(CHECKS)}")
    v.add_argument("--trials", type=int, default=8)
    v.add_argument("--seed", type=int, default=0)
    v.add_argument("--tol", default=None, help="key=value,... overrides (cap, residual, recon)")
    v.add_argument("--multiplier", default="heat:5",
                   help="identity, heat:N, imaginary-power:TAU, step or file:PATH")

    d = sub.add_parser("decompose", help="atomic decomposition of an input function")
    common(d)
    d.add_argument("--input", required=True, help="vertex function ('x value' rows) or tent CSV")
    d.add_argument("--mode", choices=("hardy", "tent"), default="hardy")
    d.add_argument("--M", type=int, default=None, help="cancellation order (default ⌈2D/p_−⌉ + 1)")
    d.add_argument("--r", type=float, default=2.0)
    d.add_argument("--K", type=int, default=None, help="level cap (default: chosen from the spectrum)")
    d.add_argument("--rtol", type=float, default=1e-4)
    d.add_argument("--seed", type=int, default=0)
    d.add_argument("--trials", type=int, default=1)

    h = sub.add_parser("heatmap", help="heat-kernel rows with the fitted Gaussian bound")
    common(h)
    h.add_argument("--vertex", type=int, default=0)
    h.add_argument("--horizon", type=int, default=64)
    return parser


def _summary_line(rec: dict) -> str:
    fitted = ", ".join(f"{k}={v:.6g}" if isinstance(v, float) else f"{k}={v}"
                       for k, v in sorted(rec.get("fitted", {}).items()))
    msg = rec.get("message", "")
    return f"{rec['status'].upper():12s} {rec['name']:18s} {fitted or msg}"


def cmd_verify(args) -> int:
    config = RunConfig(graph=args.graph, p=args.p, checks=_split_checks(args.check),
                       trials=args.trials, seed=args.seed, tol=parse_tolerances(args.tol),
                       multiplier=args.multiplier)
    report, timings = run_checks(config)
    for rec in report["checks"]:
        print(_summary_line(rec))
    if args.out:
        out = Path(args.out)
        write_json_atomic(report, out / "report.json")
        write_json_atomic(timings, out / "timing.json")
        print(f"report written to {out / 'report.json'}")
    else:
        sys.stdout.write(dumps(report))
    statuses = {r["status"] for r in report["checks"]}
    if "precondition" in statuses:
        return EXIT_USAGE
    return EXIT_OK if report["passed"] else EXIT_FAIL


def _atoms_csv(rows) -> str:
    lines = ["index,lambda,center,radius,level"]
    for i, (lam, center, radius, level) in enumerate(rows):
        lines.append(f"{i},{lam!r},{center},{radius},{level}")
    return "\n".join(lines) + "\n"


def cmd_decompose(args) -> int:
    g = parse_graph(args.graph)
    try:
        p = parse_exponent(g, args.p)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    op = MarkovOperator(g)
    if args.mode == "tent":
        try:
            F = read_tent_csv(args.input, g.n_vertices, args.K)
        except ValueError as exc:
            raise UsageError(str(exc)) from None
        d = tent_atomic_decomposition(g, p, F, q=args.r)
        rows = [(a.lam, a.ball.center, a.ball.radius, a.level) for a in d.atoms]
        summary = {"mode": "tent", "atoms": len(rows), "reconstruction_error": d.reconstruction_error,
                   "aggregate": d.aggregate, "tent_norm": d.tent_norm, "rescale_C": d.rescale_C,
                   "support_ok": d.support_ok, "pointwise_ok": d.pointwise_ok}
        residual = d.reconstruction_error
    else:
        f = read_vertex_function(args.input, g.n_vertices)
        D = fit_doubling(g).D_exponent
        M = args.M if args.M is not None else math.ceil(2 * D / p.p_minus) + 1
        d = hardy_atomic_decomposition(g, op, p, f, args.r, M, K=args.K, D=D, rtol=args.rtol)
        rows = [(float(l), c.ball.center, c.ball.radius, -1) for l, c in zip(d.lambdas, d.certificates)]
        summary = {"mode": "hardy", "atoms": len(rows), "K": d.K, "M": M, "r": args.r, "D": D,
                   "relative_residual": d.relative_residual, "residual": d.residual,
                   "aggregate": d.aggregate, "hardy_norm": d.hardy_norm, "rescale_C": d.rescale_C}
        residual = d.relative_residual
    print(f"atoms: {len(rows)}  residual: {residual:.3e}  aggregate: {summary['aggregate']:.6g}")
    if args.out:
        out = Path(args.out)
        write_json_atomic({"schema": "v1", "summary": summary,
                           "atoms": [{"lambda": r[0], "center": r[1], "radius": r[2], "level": r[3]}
                                     for r in rows]}, out / "decomposition.json")
        write_text_atomic(_atoms_csv(rows), out / "atoms.csv")
    return EXIT_OK


def cmd_heatmap(args) -> int:
    g = parse_graph(args.graph)
    if not 0 <= args.vertex < g.n_vertices:
        raise UsageError(f"vertex {args.vertex} out of range")
    if args.horizon < 1:
        raise UsageError("--horizon must be >= 1")
    op = MarkovOperator(g)
    fit = fit_gaussian_upper(op, args.horizon, centers=[args.vertex])
    out = Path(args.out or ".")
    out.mkdir(parents=True, exist_ok=True)
    path = write_heat_kernel_csv(op, args.vertex, args.horizon, fit, out / "heat_kernel.csv")
    write_json_atomic({"schema": "v1", "C": fit.C, "c": fit.c, "max_violation": fit.max_violation,
                       "horizon": fit.horizon, "vertex": args.vertex}, out / "gaussian_fit.json")
    print(f"C={fit.C:.6g} c={fit.c:g} max_violation={fit.max_violation:.3e} -> {path}")
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    handlers = {"verify": cmd_verify, "decompose": cmd_decompose, "heatmap": cmd_heatmap}
    try:
        return handlers[args.command](args)
    except (UsageError, HypothesisError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        if isinstance(exc, UsageError) and "no checks selected" in str(exc):
            parser.print_usage(sys.stderr)
        return EXIT_USAGE
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
