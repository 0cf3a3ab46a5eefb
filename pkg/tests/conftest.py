import numpy as np
import pytest

from barprop import Scenario, builtin_layout


@pytest.fixture
def homogeneous():
    return Scenario([0, 0], [40, 40], builtin_layout("homogeneous_12"), -10.0, 3.0, 3.0)


@pytest.fixture
def nonhomogeneous():
    return Scenario([0, 0], [40, 40], builtin_layout("nonhomogeneous_12"), -10.0, 3.0, 3.0)


def random_instance(rng, n_min=3, n_max=20, clearance=0.5):
    """Random scenario, noisy measurement and evaluation point away from anchors."""
    while True:
        n = int(rng.integers(n_min, n_max + 1))
        anchors = rng.uniform(0, 40, (n, 2))
        sc = Scenario([0, 0], [40, 40], anchors, rng.uniform(-30, 0), rng.uniform(2, 4),
                      rng.uniform(1, 5, n))
        target = rng.uniform(1, 39, 2)
        x = rng.uniform(1, 39, 2)
        if min(np.linalg.norm(anchors - target, axis=1).min(),
               np.linalg.norm(anchors - x, axis=1).min()) > clearance:
            from barprop import generate_rss
            return sc, generate_rss(sc, target, rng), x


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("tests.test_acceptance")
    if mod is not None and mod.RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in sorted(mod.RESULTS):
            terminalreporter.write_line(line)
