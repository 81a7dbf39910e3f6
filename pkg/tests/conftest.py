import numpy as np
import pytest

from nashdelay import game as gm
from nashdelay import seeking as sk
from nashdelay import topology as tp

_criteria = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(label): acceptance criterion reported in the summary")


def pytest_runtest_logreport(report):
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        label = dict(report.user_properties).get("criterion")
        if label:
            _criteria[label] = report.outcome


def pytest_collection_modifyitems(items):
    for item in items:
        mark = item.get_closest_marker("criterion")
        if mark:
            item.user_properties.append(("criterion", mark.args[0]))


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for label in sorted(_criteria, key=lambda s: (int(s.split()[0][1:].rstrip("ab")), s)):
        outcome = _criteria[label]
        terminalreporter.write_line(f"{'PASS' if outcome == 'passed' else 'FAIL'}  {label}")


def random_connected_graph(n, rng, p_extra=0.3):
    """Random spanning tree plus random extra edges."""
    order = rng.permutation(n)
    edges = {tuple(sorted((int(order[k]), int(order[rng.integers(k)])))) for k in range(1, n)}
    for i in range(n):
        for j in range(i + 1, n):
            if rng.random() < p_extra:
                edges.add((i, j))
    return tp.Graph.from_edges(n, sorted(edges))


def random_instance(rng, n_range=(3, 8)):
    n = int(rng.integers(n_range[0], n_range[1] + 1))
    return gm.random_game(n, seed=int(rng.integers(2**31))), random_connected_graph(n, rng)


@pytest.fixture
def ex1():
    return gm.example1()


@pytest.fixture
def wheel5():
    return tp.make_graph("wheel", 5)


@pytest.fixture
def ex1_init():
    return sk.split_initial(5)


@pytest.fixture
def two_agent():
    """a^i_ii = -2, a^i_ij = 1, b^i_i = 2: M = [[0, .5], [.5, 0]], c = (1, 1)."""
    A = np.array([[[-2.0, 1.0], [1.0, 0.0]], [[0.0, 1.0], [1.0, -2.0]]])
    b = np.array([[2.0, 0.0], [0.0, 2.0]])
    return gm.QuadraticGame(A, b)
