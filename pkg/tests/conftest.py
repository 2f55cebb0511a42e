import numpy as np
import pytest

from mpir import synth

ACCEPTANCE_LINES = []


def record(line):
    """Collect an acceptance verdict line for the end-of-run summary."""
    ACCEPTANCE_LINES.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def bundle_from(x):
    """Single-segment bundle from a (T, N) array."""
    x = np.asarray(x, dtype=float)
    return synth.TimeSeriesBundle([x[:, :, None]], synth.default_names(x.shape[1]))


def copy_with_bystander(seed, length=2003, noise=0.1):
    """x2_t = x1_{t-1} + noise*u; x1 and x3 white noise."""
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((length, 3))
    x[1:, 1] = x[:-1, 0] + noise * x[1:, 1]
    return bundle_from(x)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
