import numpy as np
import pytest

from nsimaging import _accel
from nsimaging.core import AcquisitionConfig, ArrayGeometry, ImageGrid, PulseModel
from nsimaging.simulate import Scatterer, synthesize_channel_data


@pytest.fixture(params=["numba", "numpy"])
def backend(request, monkeypatch):
    """Run a test once per kernel backend."""
    if request.param == "numba" and not _accel.HAVE_NUMBA:
        pytest.skip("numba not installed")
    monkeypatch.setattr(_accel, "USE_NUMBA", request.param == "numba")
    return request.param


@pytest.fixture(scope="session")
def l14():
    return ArrayGeometry.l14_5_38()


@pytest.fixture(scope="session")
def pulse():
    return PulseModel()


@pytest.fixture(scope="session")
def small_setup():
    """32-element array, two scatterers, three angles: fast but non-trivial."""
    geo = ArrayGeometry(32, 0.3048e-3)
    pulse = PulseModel()
    acq = AcquisitionConfig(angles_deg=(-4.0, 0.0, 4.0))
    data = synthesize_channel_data([Scatterer(0.0, 4e-3), Scatterer(1.0e-3, 5e-3, 0.5)], geo, pulse, acq)
    grid = ImageGrid.from_extent((-2e-3, 2e-3), (3e-3, 6e-3), geo.pitch / 2, pulse.wavelength / 8)
    return data, grid


def rel_close(a, b, rtol=1e-9):
    """Max abs difference relative to the larger array's peak magnitude."""
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    scale = max(np.max(np.abs(a)), np.max(np.abs(b)), 1e-300)
    return float(np.max(np.abs(a - b)) / scale) <= rtol


ACCEPTANCE_LINES = {}


def record_criterion(number, passed, text):
    """Store and print the one-line verdict for an acceptance criterion."""
    line = f"criterion {number:>2}: {'PASS' if passed else 'FAIL'}  {text}"
    ACCEPTANCE_LINES[number] = line
    print(line)
    return passed


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[k])
