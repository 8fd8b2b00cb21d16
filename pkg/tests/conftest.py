import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from govinvest.model_core import ModelParams

settings.register_profile(
    "default", max_examples=60, deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")


@pytest.fixture(scope="session")
def params():
    return ModelParams()


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def central_diff(f, x, h=None):
    h = 1e-6 * max(1.0, abs(x)) if h is None else h
    return (f(x + h) - f(x - h)) / (2.0 * h)


# criterion id -> (passed, detail); filled by test_acceptance.py
ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE, key=lambda k: (int(k.split(".")[0]), k)):
        passed, detail = ACCEPTANCE[key]
        terminalreporter.write_line(f"criterion {key}: {'PASS' if passed else 'FAIL'}  {detail}")
