from __future__ import annotations

import numpy as np
import pytest

from egmrank.dataio import load_fixture
from egmrank.simulation import APParams, generate_ap_template

_SIM_CACHE: dict = {}
ACCEPTANCE_RESULTS: dict[int, str] = {}


def simulate_fixture(name: str):
    """Shipped scenario simulated once per test session."""
    if name not in _SIM_CACHE:
        _SIM_CACHE[name] = load_fixture(name).simulate()
    return _SIM_CACHE[name]


@pytest.fixture(scope="session")
def ap_long():
    return generate_ap_template(APParams(), duration=450.0)


@pytest.fixture(scope="session")
def ap_short():
    return generate_ap_template(APParams(plateau_ms=80.0), duration=450.0)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_RESULTS:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE_RESULTS):
            terminalreporter.write_line(ACCEPTANCE_RESULTS[k])
