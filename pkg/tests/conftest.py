import numpy as np
import pytest

from beamtrack.array_signal import ArrayGeometry, build_pencil_codebook, build_pn_codebook


@pytest.fixture(scope="session")
def geometry():
    return ArrayGeometry(36, 0.5)


@pytest.fixture(scope="session")
def pencil(geometry):
    return build_pencil_codebook(geometry, 128)


@pytest.fixture(scope="session")
def pn(geometry):
    return build_pn_codebook(geometry, 16, seed=1)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# acceptance criteria append (number, title, passed, detail) here
ACCEPTANCE_RESULTS: list = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for num, title, passed, detail in sorted(ACCEPTANCE_RESULTS):
        terminalreporter.write_line(f"criterion {num} [{'PASS' if passed else 'FAIL'}] {title}: {detail}")
