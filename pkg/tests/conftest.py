import sys

import pytest

from affinegeo import assemble_edge_lengths, generate_icosphere
from affinegeo.geodesics import MarchingSolver


@pytest.fixture(scope="session")
def sphere3():
    return generate_icosphere(3)


@pytest.fixture(scope="session")
def sphere4():
    return generate_icosphere(4)


@pytest.fixture(scope="session")
def solver4(sphere4):
    return MarchingSolver(sphere4, assemble_edge_lengths(sphere4, "euclidean"))


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance") or sys.modules.get("tests.test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(results):
        ok, detail = results[n]
        terminalreporter.write_line(f"C{n} {'PASS' if ok else 'FAIL'}: {detail}")
