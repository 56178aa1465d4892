import csv
import json

import numpy as np
import pytest

from graphhardy.atomic import random_hardy_atom
from graphhardy.cli import main, read_vertex_function
from graphhardy.graph import Ball, build_lattice
from graphhardy.harness import CHECKS, UsageError, parse_graph, parse_tolerances
from graphhardy.markov import MarkovOperator
from graphhardy.varexp import ExponentFunction


def test_prop_equal_example(tmp_path, capsys):
    code = main(["verify", "--graph", "lattice:1:128", "--p", "constant:2",
                 "--check", "prop-equal", "--out", str(tmp_path)])
    assert code == 0
    report = json.loads((tmp_path / "report.json").read_text())
    rec = report["checks"][0]
    assert report["schema"] == "v1" and report["passed"]
    assert rec["name"] == "prop-equal" and rec["status"] == "pass"
    assert 1 <= rec["fitted"]["C"] < 1e4
    assert (tmp_path / "timing.json").exists()
    assert "PASS" in capsys.readouterr().out


def test_empty_selector_is_a_usage_error(capsys):
    assert main(["verify", "--graph", "lattice:1:32"]) == 2
    err = capsys.readouterr().err
    assert "no checks selected" in err and "usage:" in err


def test_unknown_selector_and_bad_graph(capsys):
    assert main(["verify", "--graph", "lattice:1:32", "--check", "nope"]) == 2
    assert "unknown check" in capsys.readouterr().err
    assert main(["verify", "--graph", "ring:12", "--check", "prop-equal"]) == 2
    with pytest.raises(UsageError):
        parse_graph("lattice:x:4")
    with pytest.raises(UsageError):
        parse_tolerances("cap")
    assert parse_tolerances("cap=5,residual=1e-2")["cap"] == 5.0


def test_precondition_exit_code(tmp_path):
    code = main(["verify", "--graph", "lattice:1:32", "--p", "constant:1",
                 "--check", "theorem-a", "--out", str(tmp_path)])
    assert code == 2
    rec = json.loads((tmp_path / "report.json").read_text())["checks"][0]
    assert rec["status"] == "precondition" and rec["hypotheses"]["violated"] == "p_minus > 1"


def test_every_selector_is_known():
    assert len(CHECKS) == 19
    assert {"theorem-a", "lemma-2.1", "thm-1.2b", "prop-riesz", "hyp-poincare"} <= set(CHECKS)


def test_determinism(tmp_path):
    args = ["verify", "--graph", "lattice:1:64", "--p", "log:1.5:0.4",
            "--check", "theorem-a,prop-equal,lemma-2.3", "--trials", "3", "--seed", "11"]
    assert main(args + ["--out", str(tmp_path / "a")]) == 0
    assert main(args + ["--out", str(tmp_path / "b")]) == 0
    a = (tmp_path / "a" / "report.json").read_bytes()
    b = (tmp_path / "b" / "report.json").read_bytes()
    assert a == b
    assert main(args[:-1] + ["12", "--out", str(tmp_path / "c")]) == 0
    assert (tmp_path / "c" / "report.json").read_bytes() != a


def test_decompose_zero_function(tmp_path):
    src = tmp_path / "f.txt"
    src.write_text("# all zero\n0 0.0\n")
    out = tmp_path / "out"
    assert main(["decompose", "--graph", "lattice:1:32", "--p", "constant:1.5",
                 "--input", str(src), "--out", str(out)]) == 0
    art = json.loads((out / "decomposition.json").read_text())
    assert art["atoms"] == [] and art["summary"]["atoms"] == 0
    rows = list(csv.reader((out / "atoms.csv").open()))
    assert rows == [["index", "lambda", "center", "radius", "level"]]


def test_decompose_atom_round_trip(tmp_path):
    g = build_lattice(1, 64)
    op = MarkovOperator(g)
    p = ExponentFunction.constant(g, 1.5)
    a = random_hardy_atom(g, op, p, 2.0, 3, np.random.default_rng(2), ball=Ball(30, 8)).a
    src = tmp_path / "atom.txt"
    src.write_text("".join(f"{x} {v!r}\n" for x, v in enumerate(a.tolist())))
    out = tmp_path / "out"
    assert main(["decompose", "--graph", "lattice:1:64", "--p", "constant:1.5", "--M", "3",
                 "--rtol", "1e-7", "--input", str(src), "--out", str(out)]) == 0
    summary = json.loads((out / "decomposition.json").read_text())["summary"]
    assert summary["relative_residual"] < 1e-6 and summary["atoms"] > 0


def test_decompose_tent_mode(tmp_path):
    src = tmp_path / "F.csv"
    src.write_text("x k value\n3 1 1.0\n4 2 -2.0\n10 3 0.5\n")
    out = tmp_path / "out"
    assert main(["decompose", "--graph", "lattice:1:32", "--p", "log:0.8:0.4", "--mode", "tent",
                 "--input", str(src), "--out", str(out)]) == 0
    summary = json.loads((out / "decomposition.json").read_text())["summary"]
    assert summary["reconstruction_error"] < 1e-10 and summary["support_ok"]


def test_parse_errors_carry_line_numbers(tmp_path, capsys):
    src = tmp_path / "f.txt"
    src.write_text("0 1.0\n1 2.0\n2 three\n")
    with pytest.raises(UsageError, match=r"f\.txt:3:"):
        read_vertex_function(src, 8)
    assert main(["decompose", "--graph", "lattice:1:8", "--input", str(src)]) == 2
    assert "f.txt:3:" in capsys.readouterr().err
    src.write_text("0 1.0\n99 2.0\n")
    with pytest.raises(UsageError, match=":2: vertex 99"):
        read_vertex_function(src, 8)
    edges = tmp_path / "g.txt"
    edges.write_text("0 1 1.0\n1 2 oops\n")
    assert main(["verify", "--graph", f"edges:{edges}", "--check", "prop-equal"]) == 2
    assert "g.txt:2:" in capsys.readouterr().err


def test_heatmap(tmp_path):
    assert main(["heatmap", "--graph", "lattice:1:32", "--vertex", "5", "--horizon", "16",
                 "--out", str(tmp_path)]) == 0
    rows = list(csv.DictReader((tmp_path / "heat_kernel.csv").open()))
    fit = json.loads((tmp_path / "gaussian_fit.json").read_text())
    assert fit["max_violation"] <= 0
    assert all(float(r["slack"]) <= 1e-12 for r in rows)
    g = build_lattice(1, 32)
    P = MarkovOperator(g).P.toarray()
    first = {int(r["y"]): float(r["p_n"]) for r in rows if r["n"] == "1"}
    for y, v in first.items():
        assert v == pytest.approx(P[5, y], rel=1e-12, abs=1e-300)
    row8 = {int(r["y"]): float(r["p_n"]) for r in rows if r["n"] == "8"}
    for d in range(1, 10):
        assert row8[(5 + d) % 32] == pytest.approx(row8[(5 - d) % 32], rel=1e-12)
    assert main(["heatmap", "--graph", "lattice:1:32", "--vertex", "99"]) == 2
