import numpy as np
import pytest
from hypothesis import settings

from symlab.models import Bubble, BubbleParams, cube_grid

settings.register_profile("symlab", max_examples=25, deadline=None)
settings.load_profile("symlab")


@pytest.fixture(scope="session")
def unit_bubble():
    return Bubble(BubbleParams((0.0, 0.0, 0.0), 1.0))


@pytest.fixture(scope="session")
def bubble_grid(unit_bubble):
    """U[0,1] on [-4,4]^3 with h = 1/4, exact tail attached."""
    shape, origin, h = cube_grid(4.0, 0.25)
    return unit_bubble.sample(shape, origin, h)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split("criterion ")[1].split(":")[0])):
            terminalreporter.write_line(line)
