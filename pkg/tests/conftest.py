import numpy as np
import pytest

from penaltyguard.model import assemble, default_config


def pytest_collection_modifyitems(config, items):
    # the acceptance suite is long; run it after the fast unit tests
    items.sort(key=lambda it: "test_acceptance" in it.nodeid)


@pytest.fixture(scope="session")
def small_instance():
    """One logical qubit with a two-qubit environment (dimension 64)."""
    return assemble(default_config(n_env=2, e_penalty=16.0, seed=3))


@pytest.fixture(scope="session")
def tiny_two_logical():
    """Two logical qubits, no environment (dimension 256)."""
    return assemble(default_config(
        n_logical=2, n_env=0, e_penalty=8.0,
        h_comp={"kind": "constant", "endpoints": [[[1.0, "XI"], [0.5, "ZZ"], [0.7, "IX"]]],
                "total_time": None},
    ))


@pytest.fixture
def rng():
    return np.random.default_rng(2024)


def pytest_terminal_summary(terminalreporter):
    mod = __import__("sys").modules.get("tests.test_acceptance") or __import__("sys").modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(results, key=lambda k: int(k[2:])):
        terminalreporter.write_line(results[key])
