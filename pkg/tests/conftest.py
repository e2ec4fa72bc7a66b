import numpy as np
import pytest

from sensorplace import synthetic
from sensorplace.network import Inlet, Link, Network, Node
from sensorplace.problem import build_problem


def path_network(n, length=1.0, n_scenarios=1):
    """Path N1-...-Nn fed by one reservoir at N1; unit lengths by default."""
    nodes = tuple(Node(f"N{i + 1}", 0.0, (1e-3,) * n_scenarios) for i in range(n))
    links = [Link("S1", "R1", "N1", 50.0, 0.3, "pipe", 1, 120.0)]
    links += [Link(f"P{i + 1}", f"N{i + 1}", f"N{i + 2}", length, 0.2, "pipe", 1, 120.0)
              for i in range(n - 1)]
    return Network(nodes, (Inlet("R1", (100.0,) * n_scenarios),), tuple(links), name=f"path{n}")


def small_networks():
    """Toy networks from 5 to 100 nodes, looped and tree."""
    return [
        synthetic.grid_network(2, 3, seed=1),
        synthetic.tree_network(8, seed=2),
        synthetic.random_looped_network(12, seed=3),
        synthetic.grid_network(5, 6, seed=4, n_inlets=2),
        synthetic.tree_network(40, seed=5),
        synthetic.random_looped_network(100, seed=6, n_inlets=2),
    ]


@pytest.fixture(scope="session")
def problem10():
    return build_problem(synthetic.random_looped_network(10, seed=2), lam=1e4)


@pytest.fixture(scope="session")
def grid_problem():
    return build_problem(synthetic.grid_network(3, 3, seed=1), lam=1e4)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# one line per acceptance criterion, echoed in the terminal summary
ACCEPTANCE_LINES = []


@pytest.fixture(scope="session")
def acceptance_report():
    def report(number, passed, detail):
        line = f"criterion {number:>2}: {'PASS' if passed else 'FAIL'}  {detail}"
        ACCEPTANCE_LINES.append((number, line))
        print(line)
        return passed
    return report


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
