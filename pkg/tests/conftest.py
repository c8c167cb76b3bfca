import numpy as np
import pytest

from hawkes_cpd import EventLog, HawkesModel, Topology

ACCEPTANCE_LINES: list[str] = []


def record_acceptance(criterion: int, passed: bool, detail: str):
    line = f"[{'PASS' if passed else 'FAIL'}] criterion {criterion}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)


def random_model(rng, d, beta=None, radius=0.6, density=0.6):
    """Random stable model on a random symmetric mask."""
    adj = rng.random((d, d)) < density
    adj = adj | adj.T | np.eye(d, dtype=bool)
    topo = Topology(tuple(f"n{i}" for i in range(d)), adj)
    alpha = rng.uniform(0.1, 1.0, (d, d)) * adj
    rho = np.max(np.abs(np.linalg.eigvals(alpha)))
    if rho > 0:
        alpha *= radius / rho
    mu = rng.uniform(0.2, 1.0, d)
    return HawkesModel.build(mu, alpha, beta if beta else rng.uniform(0.3, 2.0), topo)


def random_log(rng, d, n, horizon):
    times = np.sort(rng.uniform(0, horizon, n))
    return EventLog(times, rng.integers(0, d, n), horizon, d)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
