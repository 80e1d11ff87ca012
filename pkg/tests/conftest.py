import numpy as np
import pytest

from deepempc.dynamics import builtin_scenario
from deepempc.mpc import condense
from deepempc.mpqp import enumerate_explicit

ACCEPTANCE_RESULTS: list[tuple[str, bool, str]] = []


def record_criterion(name: str, passed: bool, detail: str = "") -> None:
    ACCEPTANCE_RESULTS.append((name, passed, detail))


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.write_sep("-", "acceptance criteria")
    for name, passed, detail in ACCEPTANCE_RESULTS:
        status = "PASS" if passed else "FAIL"
        suffix = f" ({detail})" if detail else ""
        terminalreporter.write_line(f"[{status}] {name}{suffix}")


@pytest.fixture(scope="session")
def oscillator():
    return builtin_scenario("oscillator")


@pytest.fixture(scope="session")
def oscillator_qp(oscillator):
    return condense(oscillator)


@pytest.fixture(scope="session")
def oscillator_law(oscillator_qp):
    return enumerate_explicit(oscillator_qp)


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(20240817)
