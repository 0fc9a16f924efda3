import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from sanova.io import load_dataset  # noqa: E402
from sanova.spatial import build_graph, car_structure  # noqa: E402

ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def mn20():
    data, graph = load_dataset("mn20_counts.csv", "mn20.adj")
    return data, graph, car_structure(graph)


@pytest.fixture(scope="session")
def mn87():
    data, graph = load_dataset("minnesota_counts.csv", "minnesota.adj")
    return data, graph, car_structure(graph)


@pytest.fixture
def path3():
    return build_graph(3, [(0, 1), (1, 2)])


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
