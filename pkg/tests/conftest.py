import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from msgflow import desk  # noqa: E402
from msgflow.graph import build_graph  # noqa: E402


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def two_node():
    """Complete 2-node graph with self-loops: edges (0,1),(1,0),(0,0),(1,1)."""
    return build_graph([(0, 1), (1, 0)], np.ones((1, 2)))


@pytest.fixture
def path3():
    """Directed path 0 -> 1 -> 2 without self-loops."""
    return build_graph([(0, 1), (1, 2)], np.ones((1, 3)), add_self_loops=False)


@pytest.fixture(scope="session")
def lrp_data():
    return desk.desk_dataset("ba-lrp")


@pytest.fixture(scope="session")
def infe_data():
    return desk.desk_dataset("ba-infe")


@pytest.fixture(scope="session")
def lrp_model(lrp_data):
    return desk.desk_model(lrp_data, "gcn")


@pytest.fixture(scope="session")
def infe_model(infe_data):
    return desk.desk_model(infe_data, "gcn")


_CRITERIA = pytest.StashKey[dict]()


@pytest.fixture
def criterion(request):
    """Record one acceptance criterion outcome: ``criterion(num, ok, detail)``."""
    lines = request.config.stash.setdefault(_CRITERIA, {})

    def record(num, ok, detail):
        lines[num] = f"criterion {num:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
        return ok

    return record


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(_CRITERIA, {})
    if lines:
        terminalreporter.section("acceptance criteria")
        for num in sorted(lines):
            terminalreporter.write_line(lines[num])
