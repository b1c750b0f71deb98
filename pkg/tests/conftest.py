import numpy as np
import pytest
from hypothesis import settings

from friction_walk import _kernels

settings.register_profile("default", max_examples=60, deadline=None)
settings.load_profile("default")

# one line per acceptance criterion, printed in the terminal summary
ACCEPTANCE_LINES: list[str] = []


@pytest.fixture(scope="session", autouse=True)
def warm_kernels():
    """Compile (or load from cache) every numba kernel before anything is timed."""
    U = np.array([[0.0, 0.0, 1.0]] * 2)
    Y = np.empty((3, 3))
    D = np.empty(2)
    _kernels.chain(0.5, np.array([1.0, 0.0, 0.0]), U, Y, D)
    out = np.empty(2)
    _kernels.compensated_cumsum(0.0, 0.0, D, out)
    _kernels.time_increments(np.ones(2), np.zeros(2), 1.0, out)
    S = np.empty((1, 1, 3))
    _kernels.batch_chain(0.5, np.eye(3)[:1], U[None], np.ones((1, 2)), np.array([2]), S, 2.0, 10.0)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
