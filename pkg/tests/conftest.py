import sys

import numpy as np
import pytest

from qsrd.tensor_core import QuantumState, SystemLayout


def bell_state(a="A", r="R") -> QuantumState:
    return QuantumState(SystemLayout.of((a, 2), (r, 2)), np.array([1, 0, 0, 1]) / np.sqrt(2))


def ghz_state() -> QuantumState:
    v = np.zeros(8)
    v[0] = v[7] = 1 / np.sqrt(2)
    return QuantumState(SystemLayout.of(("A", 2), ("B", 2), ("R", 2)), v)


def qubit(vec, name="A") -> QuantumState:
    v = np.asarray(vec, dtype=complex)
    return QuantumState(SystemLayout.of((name, v.size)), v / np.linalg.norm(v))


@pytest.fixture
def bell():
    return bell_state()


@pytest.fixture
def ghz():
    return ghz_state()


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(results):
        terminalreporter.write_line(results[n])
