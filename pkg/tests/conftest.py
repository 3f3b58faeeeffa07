import numpy as np
import pytest

from deeplube.network import NetworkDims, init_params

_ACCEPTANCE = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[_ACCEPTANCE] = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_ACCEPTANCE, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)


@pytest.fixture
def acceptance(request):
    """Record one PASS/FAIL line per criterion; printed in the terminal summary."""
    lines = request.config.stash[_ACCEPTANCE]

    def record(criterion: str, ok: bool, detail: str) -> bool:
        line = f"[{'PASS' if ok else 'FAIL'}] {criterion}: {detail}"
        lines.append(line)
        print(line)
        return ok

    return record


@pytest.fixture
def small_dims():
    return NetworkDims(hidden=3, fc_hidden=(4,))


@pytest.fixture
def small_params(small_dims):
    return init_params(small_dims, seed=7)


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)
