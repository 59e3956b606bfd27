import numpy as np
import pytest

from kochergin.roof import make_roof
from kochergin.rotation import cf_expand


@pytest.fixture(scope="session")
def golden():
    return cf_expand("golden", 60)


@pytest.fixture(scope="session")
def silver():
    return cf_expand("sqrt2m1", 60)


@pytest.fixture(scope="session")
def roof_half():
    return make_roof(-0.5)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance") or sys.modules.get("tests.test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(results):
        ok, detail = results[k]
        terminalreporter.write_line(f"criterion {k:>2}: {'PASS' if ok else 'FAIL'}  {detail}")
