"""
Unit conversions between the human-facing config/CSV units and SI.

Internal code works in SI with angular frequencies. Config keys and CSV
columns carry units in their names (``_MHz``, ``_us``, ...); everything that
crosses that boundary goes through here.
"""

from __future__ import annotations

from typing import Any, Mapping

import numpy as np
from numpy.typing import ArrayLike

from .constants import TWO_PI

# Scale of each unit suffix relative to the SI base unit.
SCALE: Mapping[str, float] = {
    "V": 1.0,
    "GHz": 1e9,
    "MHz": 1e6,
    "kHz": 1e3,
    "Hz": 1.0,
    "G": 1.0,
    "mG": 1e-3,
    "uG": 1e-6,
    "s": 1.0,
    "ms": 1e-3,
    "us": 1e-6,
    "ns": 1e-9,
    "m": 1.0,
    "mm": 1e-3,
    "um": 1e-6,
    "nm": 1e-9,
    "per_s": 1.0,
    "per_ms": 1e3,
}


def _scale(unit: str) -> float:
    try:
        return SCALE[unit]
    except KeyError:
        raise ValueError(f"Unknown unit '{unit}'. Known: {', '.join(SCALE)}") from None


def _out(value: Any) -> Any:
    # scalars come back as plain floats, arrays stay arrays
    return float(value) if np.ndim(value) == 0 else value


def to_si(value: ArrayLike, unit: str) -> Any:
    """Scale a value in ``unit`` to the SI base unit (Hz stays Hz)."""
    return _out(np.multiply(value, _scale(unit)))


def from_si(value: ArrayLike, unit: str) -> Any:
    """Inverse of :func:`to_si`."""
    return _out(np.divide(value, _scale(unit)))


def angular(value: ArrayLike, unit: str = "Hz") -> Any:
    """Frequency in ``unit`` to angular frequency in rad/s."""
    return _out(np.multiply(value, _scale(unit) * TWO_PI))


def cyclic(omega: ArrayLike, unit: str = "Hz") -> Any:
    """Angular frequency in rad/s to a cyclic frequency in ``unit``."""
    return _out(np.divide(omega, _scale(unit) * TWO_PI))
