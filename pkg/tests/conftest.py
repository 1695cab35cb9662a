import numpy as np
import pytest


def relaxation_distances(width, height, walls, src):
    """Shortest-path lengths by repeated neighbour relaxation until a fixed point.

    Deliberately unlike a queue-based BFS so it can serve as an independent oracle.
    """
    inf = 10**9
    free = np.ones((height, width), dtype=bool)
    for x, y in walls:
        free[y, x] = False
    dist = np.full((height, width), inf, dtype=np.int64)
    dist[src[1], src[0]] = 0
    while True:
        best = dist.copy()
        best[1:, :] = np.minimum(best[1:, :], dist[:-1, :] + 1)
        best[:-1, :] = np.minimum(best[:-1, :], dist[1:, :] + 1)
        best[:, 1:] = np.minimum(best[:, 1:], dist[:, :-1] + 1)
        best[:, :-1] = np.minimum(best[:, :-1], dist[:, 1:] + 1)
        best[~free] = inf
        best = np.minimum(best, inf)
        if np.array_equal(best, dist):
            return dist
        dist = best


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# One verdict line per acceptance criterion, printed after the test session.
ACCEPTANCE_LINES = {}


def record_acceptance(number, name, passed, detail):
    ACCEPTANCE_LINES[number] = f"criterion {number} {'PASS' if passed else 'FAIL'}  {name}: {detail}"
    print(ACCEPTANCE_LINES[number])


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for number in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[number])
