import os
import sys

import pytest

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "src"))

from density_grid import GridSpec  # noqa: E402
from physical_model import CorrelatorSpec, PhysicalParams  # noqa: E402


@pytest.fixture
def unit_params():
    return PhysicalParams(mass=1.0, hbar=1.0, temperature=1.0, spreading_width=1.0, correlation_length=1.0)


@pytest.fixture
def gaussian_correlator():
    return CorrelatorSpec("gaussian")


@pytest.fixture
def small_grid():
    return GridSpec(64, 64, 20.0, 20.0)


@pytest.fixture(autouse=True)
def _isolated_env(monkeypatch, tmp_path):
    monkeypatch.delenv("KINBATH_OUT_DIR", raising=False)
    monkeypatch.delenv("KINBATH_THREADS", raising=False)
    monkeypatch.setenv("LOG_DIR", str(tmp_path / "logs"))
