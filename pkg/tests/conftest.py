import numpy as np
import pytest

from lakevortex import DepthField, Grid
from lakevortex.kernel import build_kernel_table


@pytest.fixture(scope="session")
def bump():
    return DepthField("radial-gaussian-bump", (0.5, 1.0))


@pytest.fixture(scope="session")
def flat():
    return DepthField("constant", (1.0,))


@pytest.fixture(scope="session")
def grid128():
    return Grid(128, 8.0)


@pytest.fixture(scope="session")
def bump_table(bump, grid128):
    return build_kernel_table(bump, grid128, 17)


@pytest.fixture(scope="session")
def flat_table(flat, grid128):
    return build_kernel_table(flat, grid128, 17)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def grid256():
    return Grid(256, 8.0)


@pytest.fixture(scope="session")
def bump_table256(bump, grid256):
    return build_kernel_table(bump, grid256, 17)


_CRITERIA = []


@pytest.fixture(scope="session")
def criterion():
    """``criterion(k, ok, text)`` prints and records one acceptance line and returns ``ok``."""
    def report(k, ok, text):
        line = f"{'PASS' if ok else 'FAIL'} criterion {k}: {text}"
        print(line)
        _CRITERIA.append(line)
        return ok
    return report


def pytest_terminal_summary(terminalreporter):
    if _CRITERIA:
        terminalreporter.section("acceptance criteria")
        for line in _CRITERIA:
            terminalreporter.write_line(line)
