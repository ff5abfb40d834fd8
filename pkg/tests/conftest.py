# Pytest configuration and fixtures
import os
from pathlib import Path
from typing import Callable

import pytest

from src.sim.atom_optics import sr88_level_scheme
from src.sim.models import LaserField, LevelScheme, SecularFrequencies, TrapConfig
from src.sim.trap_model import calibrate_geometry
from src.utils import config as config_module
from src.utils.constants import TWO_PI


@pytest.fixture(autouse=True)
def isolated_settings(tmp_path, monkeypatch):
    """Fresh IONTRAP_* environment per test, outputs under tmp_path."""
    for key in list(os.environ):
        if key.startswith("IONTRAP_"):
            monkeypatch.delenv(key, raising=False)
    monkeypatch.setenv("IONTRAP_OUTPUT_DIR", str(tmp_path / "results"))
    monkeypatch.setenv("IONTRAP_SHOW_PROGRESS", "false")
    monkeypatch.setenv("IONTRAP_USE_COLORS", "false")
    monkeypatch.setattr(config_module, "_settings", None)
    yield
    config_module._settings = None


@pytest.fixture
def scheme() -> LevelScheme:
    """88Sr+ level scheme at the operating field."""
    return sr88_level_scheme(1.18)


@pytest.fixture
def cooling_field() -> LaserField:
    return LaserField(
        transition=("S1/2", "P1/2"),
        detuning=-10.0,
        saturation=0.6,
        polarization="pi",
        linewidth=0.5,
    )


@pytest.fixture
def repump_field() -> LaserField:
    return LaserField(
        transition=("D3/2", "P1/2"),
        detuning=-14.0,
        saturation=7.0,
        polarization="x",
        linewidth=0.5,
    )


@pytest.fixture
def calibrated_trap() -> TrapConfig:
    """Trap calibrated to 1.0 / 2.5 / 2.35 MHz at 200 V, 21 MHz, 50 V, 0.5 V."""
    targets = SecularFrequencies(
        omega_ax=TWO_PI * 1.0e6,
        omega_rad1=TWO_PI * 2.5e6,
        omega_rad2=TWO_PI * 2.35e6,
    )
    return calibrate_geometry(targets, TrapConfig())


@pytest.fixture
def write_config(tmp_path) -> Callable[..., Path]:
    """Write run-config text to a file and return its path."""

    def _write(text: str, name: str = "run.ini") -> Path:
        path = tmp_path / name
        path.write_text(text, encoding="utf-8")
        return path

    return _write
