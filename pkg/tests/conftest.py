import numpy as np
import pytest

from tvcomb.panel import ForecastPanel


def random_panel(rng, T, p, noise=1.0):
    F = rng.standard_normal((T, p))
    beta = rng.standard_normal(p + 1)
    y = np.empty(T + 1)
    y[0] = rng.standard_normal()
    y[1:] = beta[0] + F @ beta[1:] + noise * rng.standard_normal(T)
    return ForecastPanel(y, F)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE_LINES = []


def report(criterion, passed, detail):
    line = f"CRITERION {criterion}: {'PASS' if passed else 'FAIL'} | {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return passed


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
