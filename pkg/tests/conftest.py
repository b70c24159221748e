import numpy as np
import pytest

from fkchain.dsp import dsp_constant
from fkchain.feynman_kac import FKOperator, Potential, bound_constants, find_B0
from fkchain.kernel import nn_kernel
from fkchain.space import build_lattice, graph_from_edges, lattice_graph
from fkchain.subordination import z1_subordinate_kernel

# acceptance lines collected during the run, echoed in the terminal summary
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)


def quadratic(t):
    return 1.0 + t * t


@pytest.fixture(scope="session")
def stable_z1():
    """alpha = 1/2 stable subordinate walk on Z^1, guard radius 500, V = 1 + x^2."""
    sp = build_lattice(1, 500, 500)
    P = z1_subordinate_kernel(sp, 0.5)
    op = FKOperator(P, Potential.radial(sp, quadratic))
    rep = dsp_constant(P, "window", "window")
    B0 = find_B0(op, rep.interval[1])
    return {"space": sp, "P": P, "op": op, "dsp": rep, "B0": B0,
            "cert": bound_constants(op, B0, rep.interval)}


@pytest.fixture(scope="session")
def small_z1():
    """Same model on a 49-state window."""
    sp = build_lattice(1, 24, 24)
    P = z1_subordinate_kernel(sp, 0.5)
    return FKOperator(P, Potential.radial(sp, quadratic))


@pytest.fixture
def z1_walk():
    sp = build_lattice(1, 20, 20)
    return nn_kernel(lattice_graph(sp))


@pytest.fixture
def cycle_graph():
    n = 8
    return graph_from_edges(n, [(i, (i + 1) % n, 1.0) for i in range(n)])


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
