import json
from pathlib import Path

import numpy as np
import pytest

from qrpath import Dataset, SimSpec, simulate

FIXTURES = Path(__file__).parent / "fixtures"


def random_data(seed, n, p):
    return simulate(SimSpec(n, p, seed))


def suite(count=100, seed=20240):
    """Seeded small instances: n in [8, 30], p in [1, 10], tau and lambda from fixed sets."""
    rng = np.random.default_rng(seed)
    out = []
    for k in range(count):
        n = int(rng.integers(8, 31))
        p = int(rng.integers(1, 11))
        tau = float(rng.choice([0.1, 0.3, 0.5, 0.9]))
        lam = float(rng.choice([0.05, 1.0, 20.0]))
        out.append((random_data(1000 + k, n, p), tau, lam))
    return out


@pytest.fixture
def five_point():
    spec = json.loads((FIXTURES / "five_point.json").read_text())
    return spec, Dataset(np.array(spec["x"])[:, None], np.array(spec["y"]))


@pytest.fixture
def small():
    return random_data(3, 15, 3)


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
