import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

_CRITERIA: list[str] = []


def record_criterion(line: str) -> None:
    print(line)
    _CRITERIA.append(line)


def pytest_terminal_summary(terminalreporter):
    if _CRITERIA:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_CRITERIA):
            terminalreporter.write_line(line)


def toy_data(n, seed=0, fn=None, sigma=0.3):
    rng = np.random.default_rng(seed)
    x = np.sort(rng.random(n))
    f = np.sin(2 * np.pi * x) if fn is None else fn(x)
    return x, f + sigma * rng.standard_normal(n)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
