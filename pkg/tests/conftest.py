import numpy as np
import pytest

from ucadoa.array_model import array_response, reference_directions, reference_geometry
from ucadoa.signal_sim import NoiseModel, SourceModel, exact_covariance


@pytest.fixture
def geom():
    return reference_geometry()


@pytest.fixture
def dirs():
    return reference_directions()


@pytest.fixture
def sources(dirs):
    return SourceModel(tuple(dirs))


@pytest.fixture
def response(geom, dirs):
    return array_response(geom, dirs)


@pytest.fixture
def exact_noiseless(geom, sources):
    return exact_covariance(geom, sources, NoiseModel(), noise_variance=0.0)


@pytest.fixture
def rng():
    return np.random.default_rng(0)


ACCEPTANCE_LINES = []


@pytest.fixture
def criterion(request):
    """Record one PASS/FAIL line for the acceptance report."""
    state = {}

    def report(label, ok, detail):
        state["line"] = f"{'PASS' if ok else 'FAIL'}  {label}: {detail}"

    yield report
    if "line" in state:
        ACCEPTANCE_LINES.append(state["line"])


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
