from __future__ import annotations

import numpy as np
import pytest
from hypothesis import settings

settings.register_profile("artifact", deadline=None, max_examples=60)
settings.load_profile("artifact")


def within_4se(sample, target) -> bool:
    sample = np.asarray(sample, float)
    se = sample.std(ddof=1) / np.sqrt(sample.size)
    return abs(sample.mean() - target) < 4 * se


@pytest.fixture
def gen():
    return np.random.Generator(np.random.Philox(12345))


# one summary line per acceptance criterion, printed at the end of the run
ACCEPTANCE_LINES: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[k])
