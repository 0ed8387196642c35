import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from ppcnet.env import ARM, POINT, Environment, reference_env  # noqa: E402


def make_point_env(circles=(), rects=(), size=10.0, home=(0.5, 0.5), place=(9.5, 9.5),
                   bin_region=(4.0, 4.0, 6.0, 6.0)) -> Environment:
    return Environment(
        name="test-point", robot=POINT,
        joint_limits=np.array([[0.0, size], [0.0, size]]),
        circles=np.asarray(circles, dtype=float).reshape(-1, 3),
        rects=np.asarray(rects, dtype=float).reshape(-1, 4),
        bin_region=np.asarray(bin_region, dtype=float),
        home=np.asarray(home, dtype=float), place=np.asarray(place, dtype=float),
    )


def make_arm_env(links=(1.0, 1.0), circles=(), rects=(), half_width=0.05,
                 bin_region=(-3.0, -3.0, 3.0, 3.0), home=None, place=None) -> Environment:
    n = len(links)
    return Environment(
        name="test-arm", robot=ARM,
        joint_limits=np.tile([-np.pi, np.pi], (n, 1)),
        circles=np.asarray(circles, dtype=float).reshape(-1, 3),
        rects=np.asarray(rects, dtype=float).reshape(-1, 4),
        bin_region=np.asarray(bin_region, dtype=float),
        home=np.zeros(n) if home is None else np.asarray(home, dtype=float),
        place=np.zeros(n) if place is None else np.asarray(place, dtype=float),
        link_lengths=np.asarray(links, dtype=float), half_width=half_width,
    )


@pytest.fixture(scope="session")
def arm_env():
    return reference_env("arm")


@pytest.fixture(scope="session")
def point_env():
    return reference_env("point")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# -- acceptance summary ----------------------------------------------------

ACCEPTANCE: dict[int, tuple[bool, str]] = {}


@pytest.fixture(scope="session")
def acceptance():
    """Criterion number -> (passed, detail); printed at the end of the run."""
    return ACCEPTANCE


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}")
