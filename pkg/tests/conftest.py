import numpy as np
import pytest

from sgame import ExpertParams, GatingParams, ParameterBounds, SgameParams


def gaussian_params(means, variances, gate_intercepts=None, bounds=None, p=1):
    """Intercept-only q=1 model with the given expert means and variances."""
    k = len(means)
    bounds = bounds or ParameterBounds(5.0, 10.0, 0.01, 100.0, k)
    gi = np.zeros(k) if gate_intercepts is None else np.asarray(gate_intercepts, float)
    return SgameParams(
        GatingParams(gi, np.zeros((k, p))),
        ExpertParams(np.asarray(means, float).reshape(k, 1), np.zeros((k, 1, p)),
                     np.asarray(variances, float).reshape(k, 1, 1)),
        bounds,
    )


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def wide_bounds():
    return ParameterBounds(2.0, 3.0, 0.5, 4.0, 2)


# one line per acceptance criterion, filled by test_acceptance.py
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
