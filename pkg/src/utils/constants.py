"""
Physical and atomic constants for the ion-trap simulator.

This module centralizes:
- Fundamental constants (from scipy.constants) in SI units
- The versioned 88Sr+ constants file and its loader
- Experiment names and other small enumerations shared by the CLI and runner

Design goals:
- Strong typing for safer usage across the codebase
- Immutable, read-only mappings to avoid accidental mutation
- Helper functions with clear errors and predictable behavior
"""

from __future__ import annotations

import configparser
import logging
import math
from enum import Enum
from functools import lru_cache
from pathlib import Path
from typing import List, Mapping, Optional

from pydantic import BaseModel, ConfigDict, Field, ValidationError
from scipy import constants as sc

from ..sim.errors import ParseError, UnknownKey

logger = logging.getLogger(__name__)


# Fundamental constants (SI)
ELEMENTARY_CHARGE: float = sc.e
HBAR: float = sc.hbar
PLANCK: float = sc.h
BOLTZMANN: float = sc.k
ATOMIC_MASS: float = sc.atomic_mass
BOHR_MAGNETON: float = sc.physical_constants["Bohr magneton"][0]

# 1 G = 1e-4 T
GAUSS: float = 1e-4
# Bohr magneton over h in Hz/G (~1.3996 MHz/G)
MU_B_HZ_PER_G: float = BOHR_MAGNETON * GAUSS / PLANCK

TWO_PI: float = 2.0 * math.pi

PACKAGED_CONSTANTS: Path = Path(__file__).resolve().parent.parent / "data" / "sr88_constants.txt"


class Experiment(str, Enum):
    """Experiments the runner can dispatch."""

    SPECTRUM = "spectrum"
    MICROMOTION = "micromotion"
    RABI_THERMAL = "rabi-thermal"
    SIDEBANDS = "sidebands"
    COOLING = "cooling"
    HEATING = "heating"
    QUBIT_RABI = "qubit-rabi"
    RAMSEY = "ramsey"
    FIT = "fit"


class SweepDirection(str, Enum):
    """Drive-frequency sweep direction for hysteretic responses."""

    UP = "up"
    DOWN = "down"


class PhasePolicy(str, Enum):
    """How the phase of a line-frequency harmonic is chosen per shot."""

    RANDOM = "random"
    FIXED = "fixed"


class AtomicConstants(BaseModel):
    """Contents of the constants file, units in the field names."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    version: int = Field(..., ge=1)
    ion_mass_u: float = Field(..., gt=0)
    wavelength_422_nm: float = Field(..., gt=0)
    p12_lifetime_ns: float = Field(..., gt=0)
    p12_to_d32_branching: float = Field(..., ge=0, le=1)
    wavelength_1092_nm: float = Field(..., gt=0)
    d32_lifetime_s: float = Field(..., gt=0)
    wavelength_674_nm: float = Field(..., gt=0)
    d52_lifetime_s: float = Field(..., gt=0)
    g_s12: float
    g_p12: float
    g_d32: float
    gyromagnetic_slope_MHz_per_G: float = Field(..., gt=0)

    @property
    def ion_mass(self) -> float:
        """Ion mass in kg."""
        return self.ion_mass_u * ATOMIC_MASS

    @property
    def p12_decay_rate(self) -> float:
        """Total P1/2 decay rate in 1/s."""
        return 1.0 / (self.p12_lifetime_ns * 1e-9)

    @property
    def d32_decay_rate(self) -> float:
        """D3/2 decay rate in 1/s."""
        return 1.0 / self.d32_lifetime_s


def parse_constants(text: str, source: str = "<string>") -> AtomicConstants:
    """
    Parse constants-file text.

    Args:
        text: File contents, ``key = value`` per line.
        source: Name used in error messages.

    Returns:
        Validated AtomicConstants.

    Raises:
        ParseError: Malformed line (with line number).
        UnknownKey: Key not in the constants schema.
    """
    parser = configparser.ConfigParser(
        inline_comment_prefixes=("#",), interpolation=None
    )
    parser.optionxform = str  # type: ignore[assignment,method-assign]
    try:
        # header line shifts configparser's line numbers by one
        parser.read_string("[constants]\n" + text, source=source)
    except configparser.ParsingError as e:
        lineno = e.errors[0][0] - 1 if e.errors else None
        raise ParseError(f"{source}: malformed constants line", line=lineno) from e
    except configparser.Error as e:
        raise ParseError(f"{source}: {e}") from e

    values = dict(parser["constants"])
    unknown = sorted(set(values) - set(AtomicConstants.model_fields))
    if unknown:
        raise UnknownKey(
            f"{source}: unknown constants {unknown}", details={"keys": unknown}
        )
    try:
        return AtomicConstants.model_validate(values)
    except ValidationError as e:
        raise ParseError(f"{source}: {e.errors()[0]['msg']}") from e


@lru_cache(maxsize=8)
def _load_constants(path: str) -> AtomicConstants:
    text = Path(path).read_text(encoding="utf-8")
    constants = parse_constants(text, source=path)
    logger.debug("Loaded constants v%d from %s", constants.version, path)
    return constants


def get_constants(path: Optional[Path] = None) -> AtomicConstants:
    """
    Load the atomic constants.

    Args:
        path: Explicit file. Defaults to ``IONTRAP_CONSTANTS`` if set,
            otherwise the packaged file.

    Returns:
        Cached AtomicConstants for that path.
    """
    if path is None:
        from .config import get_settings

        path = get_settings().constants_path or PACKAGED_CONSTANTS
    return _load_constants(str(Path(path).resolve()))


def get_experiment(name: str) -> Experiment:
    """
    Resolve an experiment name.

    Args:
        name: Experiment name, e.g. ``"spectrum"``.

    Returns:
        Experiment enum member.

    Raises:
        ValueError: If the name is unknown, listing the valid names.
    """
    try:
        return Experiment(name.strip().lower())
    except ValueError:
        raise ValueError(
            f"Unknown experiment '{name}'. Available: {', '.join(list_experiments())}"
        ) from None


def list_experiments() -> List[str]:
    """All experiment names in dispatch order."""
    return [e.value for e in Experiment]


# Reference operating point of the miniature trap, frequencies in MHz
# Exposed as a Mapping to signal read-only usage; do not mutate at runtime.
REFERENCE_SECULAR_MHZ: Mapping[str, float] = {
    "omega_ax": 1.0,
    "omega_rad1": 2.5,
    "omega_rad2": 2.35,
}

# Cubic axial force coefficient alpha/(2 pi)^2 in kg Hz^2/m^2
REFERENCE_ALPHA_HZ: float = 1.74e-7
