import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from graphhardy.graph import build_lattice, from_edges
from graphhardy.markov import MarkovOperator

settings.register_profile("default", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture(scope="session")
def two_vertex():
    """Two vertices, loops and edge all of weight 1: μ = (2, 2), p ≡ 1/2."""
    return from_edges(2, [(0, 0, 1.0), (1, 1, 1.0), (0, 1, 1.0)])


@pytest.fixture(scope="session")
def ring64():
    g = build_lattice(1, 64)
    return g, MarkovOperator(g)


@pytest.fixture(scope="session")
def ring128():
    g = build_lattice(1, 128)
    return g, MarkovOperator(g)


@pytest.fixture(scope="session")
def grid8():
    g = build_lattice(2, 8)
    return g, MarkovOperator(g)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# -- acceptance summary ---------------------------------------------------

_ACCEPTANCE = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[_ACCEPTANCE] = []


@pytest.fixture
def acceptance(request):
    """Record one PASS/FAIL line per acceptance criterion.

    Lines are printed immediately (visible with ``-s``) and repeated in an
    ``acceptance`` section of the terminal summary.
    """
    lines = request.config.stash[_ACCEPTANCE]

    def record(number: int, passed: bool, detail: str) -> bool:
        line = f"criterion {number:2d}: {'PASS' if passed else 'FAIL'}  {detail}"
        print(line)
        lines.append(line)
        return passed

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_ACCEPTANCE, [])
    if lines:
        terminalreporter.section("acceptance")
        for line in sorted(lines):
            terminalreporter.write_line(line)
