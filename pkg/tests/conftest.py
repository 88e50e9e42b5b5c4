import numpy as np
import pytest
from hypothesis import settings

from rodsim.dynamics import RodParams
from rodsim.follower import FollowerConfig

settings.register_profile("default", deadline=None, max_examples=100)
settings.load_profile("default")

BOUNDS = np.array([5.0, 5.0, 0.5])


@pytest.fixture
def params():
    return RodParams()


@pytest.fixture
def fcfg():
    return FollowerConfig()


def random_state(rng, spread=1.0):
    s = rng.uniform(-spread, spread, 6)
    s[0] += 5.0
    s[2] += 5.0
    s[4] = rng.uniform(-np.pi, np.pi)
    return s


def random_wrench(rng, bounds=BOUNDS):
    return rng.uniform(-1.0, 1.0, 3) * bounds


# one summary line per acceptance criterion, printed after the run
ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def acceptance():
    def report(num: int, ok: bool, text: str):
        ACCEPTANCE_LINES.append(f"criterion {num}: {'PASS' if ok else 'FAIL'}  {text}")
        print(ACCEPTANCE_LINES[-1])

    return report


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
