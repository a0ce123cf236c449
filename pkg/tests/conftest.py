import numpy as np
import pytest

from hybridlab.phasespace import PhaseSpaceGrid
from hybridlab.scenario import build_measurement_hamiltonian

_ACCEPTANCE = []

SQRT_HALF = 2 ** -0.5


@pytest.fixture
def record_criterion():
    """Record one acceptance criterion outcome; printed in the terminal summary."""

    def record(number, title, passed, detail=""):
        _ACCEPTANCE.append((number, title, bool(passed), detail))
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number, title, passed, detail in sorted(_ACCEPTANCE, key=lambda r: (r[0], r[1])):
        status = "PASS" if passed else "FAIL"
        line = f"[{status}] criterion {number}: {title}"
        if detail:
            line += f" ({detail})"
        terminalreporter.write_line(line)


@pytest.fixture
def ref_spec():
    return build_measurement_hamiltonian((0.0, 0.0), (1.0, -1.0), "0", "q")


@pytest.fixture
def ref_grid():
    return PhaseSpaceGrid.square(4.0, 64)


@pytest.fixture
def equal_amplitudes():
    return (SQRT_HALF, SQRT_HALF)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
