from pathlib import Path

import pytest

from causalineq.io import load_graph

ROOT = Path(__file__).resolve().parents[1]
GRAPHS = ROOT / "graphs"


def fs(*names):
    return frozenset(names)


@pytest.fixture(scope="session")
def instrument():
    return load_graph(GRAPHS / "instrument.yaml")


@pytest.fixture(scope="session")
def two_block():
    return load_graph(GRAPHS / "two_block.yaml")


@pytest.fixture
def graph_dir():
    return GRAPHS


# one line per acceptance criterion, printed in the terminal summary
ACCEPTANCE_LINES: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[n])
