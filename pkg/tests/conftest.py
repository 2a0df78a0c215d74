import numpy as np
import pytest

from netreport.population import Population


def six_node(groups=None):
    """Edges 1-2, 2-3, 3-4, 4-5, 2-5, 3-6; F = {2, 3}; H = {1..5}."""
    return Population.from_edges(
        [1, 2, 3, 4, 5, 6],
        [(1, 2), (2, 3), (3, 4), (4, 5), (2, 5), (3, 6)],
        frame=[2, 3],
        hidden=[1, 2, 3, 4, 5],
        groups=groups,
    )


@pytest.fixture
def fixture6():
    return six_node()


@pytest.fixture
def fixture6_grouped():
    return six_node({1: "a", 2: "a", 3: "b", 4: "b", 5: "a", 6: "b"})


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# one line per acceptance criterion, printed after the run
ACCEPTANCE: dict[int, tuple[bool, str]] = {}


def record_criterion(number: int, ok: bool, detail: str) -> None:
    ACCEPTANCE[number] = (bool(ok), detail)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[number]
        terminalreporter.write_line(f"CRITERION {number}: {'PASS' if ok else 'FAIL'} - {detail}")
