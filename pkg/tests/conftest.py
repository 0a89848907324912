import numpy as np
import pytest

from morley_fasp.mesh import build_domain


@pytest.fixture(scope="session")
def mesh_cache():
    cache = {}

    def get(name, level):
        key = (name, level)
        if key not in cache:
            cache[key] = build_domain(name, level)
        return cache[key]

    return get


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    import sys
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "SUMMARY", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
