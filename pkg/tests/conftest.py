import numpy as np
import pytest

from modeshare.graph import build_graph


def make_graph(edges, weight=1.0):
    return build_graph([(str(a), str(b), weight) if len(e) == 2 else (str(a), str(b), e[2])
                        for e in edges for a, b in [e[:2]]])


@pytest.fixture
def triangle():
    return make_graph([(0, 1), (1, 2), (0, 2)])


@pytest.fixture
def path3():
    return make_graph([(0, 1), (1, 2)])


@pytest.fixture
def small_graphs():
    """The fixed set of graphs with at most 6 nodes used by the walk oracle."""
    return {
        "path": make_graph([(0, 1), (1, 2), (2, 3), (3, 4)]),
        "cycle": make_graph([(0, 1), (1, 2), (2, 3), (3, 4), (4, 5), (5, 0)]),
        "star": make_graph([(0, 1), (0, 2), (0, 3), (0, 4)]),
        "triangle_tail": make_graph([(0, 1), (1, 2), (0, 2), (2, 3), (3, 4)]),
    }


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# one line per acceptance criterion, echoed in the terminal summary
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
