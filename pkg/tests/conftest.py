# tests/conftest.py
from __future__ import annotations

import sys
from pathlib import Path

import pytest


# Ensure the project src/ directory is importable as a package root
PROJECT_ROOT = Path(__file__).resolve().parents[1]
SRC_ROOT = PROJECT_ROOT / "src"
if str(SRC_ROOT) not in sys.path:
    sys.path.insert(0, str(SRC_ROOT))

from crosstack.cell import TransistorParams  # noqa: E402
from crosstack.config import RunConfig  # noqa: E402
from crosstack.device import DeviceParams  # noqa: E402


@pytest.fixture(scope="session")
def python_version() -> tuple[int, int, int]:
    """Return the current Python version as a (major, minor, micro) tuple."""
    version = sys.version_info
    return version.major, version.minor, version.micro


@pytest.fixture
def params() -> DeviceParams:
    """Reference device: 10 kOhm +/- 7% set, 100 kOhm +/- 10% reset."""
    return DeviceParams()


@pytest.fixture
def exact_params() -> DeviceParams:
    """Reference device without resistance variation."""
    return DeviceParams(sigma_set=0.0, sigma_reset=0.0)


@pytest.fixture
def switch() -> TransistorParams:
    return TransistorParams()


@pytest.fixture
def ideal_switch() -> TransistorParams:
    """Zero on-resistance, zero off-conductance."""
    return TransistorParams(r_on=0.0, g_off=0.0)


@pytest.fixture
def config() -> RunConfig:
    return RunConfig()
