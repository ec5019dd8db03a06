import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from latentsurv.cohort import Cohort  # noqa: E402

DATA = Path(__file__).parent / "data"


def random_cohort(rng, n, d=3, censor=0.4, tie_times=False):
    """Small cohort with arbitrary (not proportional-hazards) survival data."""
    if tie_times:
        times = rng.integers(1, max(2, n // 2), size=n).astype(float)
    else:
        times = rng.exponential(10.0, size=n) + 0.01
    events = rng.random(n) >= censor
    if not events.any():
        events[rng.integers(n)] = True
    return Cohort([f"r{i}" for i in range(n)], times, events, rng.normal(size=(n, d)))


@pytest.fixture
def np_rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    acceptance = sys.modules.get("test_acceptance")
    if acceptance is None or not acceptance.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for _, _, line in sorted(acceptance.RESULTS):
        terminalreporter.write_line(line)
