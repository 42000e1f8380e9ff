import numpy as np
import pytest

from driftunlearn.datastream import DriftSpec, StreamSpec, materialize, stack
from driftunlearn.model import LossParams


def random_problem(seed, n=50, d=10, C=3, lam=0.1, theta_scale=1.0):
    rng = np.random.default_rng(seed)
    X = rng.uniform(0, 1, size=(n, d))
    y = rng.integers(0, C, size=n)
    theta = theta_scale * rng.standard_normal(d * C)
    return theta, X, y, LossParams(lam, C)


def stationary_chunks(seed=0, m=100, n_chunks=8, d=10, C=3):
    spec = StreamSpec(m=m, n_chunks=n_chunks, seed=seed, d=d, n_classes=C, drift=DriftSpec("none"))
    return materialize(spec)


@pytest.fixture
def small_problem():
    return random_problem(0)


@pytest.fixture
def window_data():
    chunks = stationary_chunks(seed=3, m=60, n_chunks=4)
    X, y = stack(chunks)
    return chunks, X, y, LossParams(0.1, 3)


# ---------------------------------------------------------------- acceptance report

ACCEPTANCE_LINES: dict[int, str] = {}


@pytest.fixture
def criterion(request):
    """Record ``(ok, detail)`` for an acceptance criterion; printed in the terminal summary."""
    marker = request.node.get_closest_marker("criterion")
    number = marker.args[0]

    def report(ok: bool, detail: str) -> bool:
        ACCEPTANCE_LINES[number] = f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
        print(ACCEPTANCE_LINES[number])
        return ok

    return report


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[n])
