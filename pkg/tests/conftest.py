from __future__ import annotations

import numpy as np
import pytest

from virtue_bench.coding import default_theory
from virtue_bench.observations import all_inputs
from virtue_bench.toymodels import train_toy

_ACCEPTANCE: dict[str, str] = {}


@pytest.fixture(scope="session")
def theory():
    return default_theory()


@pytest.fixture(scope="session")
def maj_net():
    """majority8, seed 3, trained to 100% so target and model labels coincide."""
    return train_toy("majority8", 3, target_accuracy=1.0).net


@pytest.fixture(scope="session")
def maj42():
    return train_toy("majority8", 42).net


@pytest.fixture(scope="session")
def modadd_net():
    return train_toy("modadd7", 1).net


@pytest.fixture(scope="session")
def maj_io(maj_net):
    X = all_inputs(8)
    return X, maj_net.predict(X)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_runtest_logreport(report):
    if "test_acceptance.py" not in report.nodeid:
        return
    name = report.nodeid.split("::")[-1]
    if report.when == "call" or report.failed:
        if _ACCEPTANCE.get(name) != "FAIL":
            _ACCEPTANCE[name] = "PASS" if report.passed else "FAIL"


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for name in sorted(_ACCEPTANCE):
        terminalreporter.write_line(f"{_ACCEPTANCE[name]}  {name}")
