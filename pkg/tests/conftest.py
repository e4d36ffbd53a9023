import numpy as np
import pytest

from besovtrace import generators as g

_ACCEPTANCE_LINES = []


@pytest.fixture
def report_line():
    """Print an acceptance verdict and keep it for the terminal summary."""
    def emit(criterion, ok, detail):
        line = f"{'PASS' if ok else 'FAIL'} criterion {criterion}: {detail}"
        print(line)
        _ACCEPTANCE_LINES.append(line)
        return ok
    return emit


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def grid1_6():
    return g.grid_space(1, 6)


@pytest.fixture(scope="session")
def grid2_5():
    return g.grid_space(2, 5)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
