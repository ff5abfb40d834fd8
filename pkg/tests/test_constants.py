"""
Tests for atomic constants, experiment names and unit conversion.
"""

import math

import numpy as np
import pytest

from src.sim.errors import ParseError, UnknownKey
from src.utils.constants import (
    MU_B_HZ_PER_G,
    PACKAGED_CONSTANTS,
    Experiment,
    get_constants,
    get_experiment,
    list_experiments,
    parse_constants,
)
from src.utils.units import angular, cyclic, from_si, to_si


class TestConstantsFile:
    """Test the packaged constants file and its parser."""

    def test_packaged_values(self):
        """Test the shipped 88Sr+ values."""
        c = get_constants()
        assert c.version == 1
        assert c.ion_mass == pytest.approx(87.905063 * 1.66053906660e-27, rel=1e-6)
        assert c.p12_decay_rate == pytest.approx(1 / 7.39e-9)
        assert c.p12_to_d32_branching == pytest.approx(1 / 14)
        assert c.g_s12 == 2.0
        assert c.g_d32 == pytest.approx(0.8)

    def test_bohr_magneton_in_hz_per_gauss(self):
        """Test mu_B/h is about 1.4 MHz/G."""
        assert MU_B_HZ_PER_G == pytest.approx(1.39962e6, rel=1e-5)

    def test_parse_reports_line(self):
        """Test a malformed line is reported with its line number."""
        text = PACKAGED_CONSTANTS.read_text(encoding="utf-8") + "this is not a key value\n"
        with pytest.raises(ParseError) as exc_info:
            parse_constants(text)
        assert exc_info.value.line == len(text.splitlines())

    def test_unknown_key(self):
        """Test keys outside the schema are rejected."""
        text = PACKAGED_CONSTANTS.read_text(encoding="utf-8") + "bogus_value = 1\n"
        with pytest.raises(UnknownKey):
            parse_constants(text)

    def test_missing_key(self):
        """Test a missing constant is a parse error."""
        text = "version = 1\nion_mass_u = 88\n"
        with pytest.raises(ParseError):
            parse_constants(text)


class TestExperiments:
    """Test experiment name resolution."""

    def test_resolve(self):
        """Test names resolve case-insensitively."""
        assert get_experiment(" Rabi-Thermal ") == Experiment.RABI_THERMAL

    def test_unknown(self):
        """Test unknown names list the valid ones."""
        with pytest.raises(ValueError) as exc_info:
            get_experiment("teleport")
        assert "spectrum" in str(exc_info.value)

    def test_list(self):
        """Test every experiment is listed."""
        assert len(list_experiments()) == len(Experiment)
        assert "fit" in list_experiments()


class TestUnits:
    """Test unit conversion helpers."""

    def test_to_and_from_si(self):
        """Test scaling by unit suffix."""
        assert to_si(2.5, "MHz") == pytest.approx(2.5e6)
        assert from_si(1.5e-5, "us") == pytest.approx(15.0)
        assert to_si(1.61, "uG") == pytest.approx(1.61e-6)

    def test_arrays_stay_arrays(self):
        """Test array inputs come back as arrays and scalars as floats."""
        out = to_si(np.array([1.0, 2.0]), "ms")
        assert isinstance(out, np.ndarray)
        assert isinstance(to_si(1, "ms"), float)

    def test_angular(self):
        """Test cyclic to angular conversion and back."""
        omega = angular(1.0, "MHz")
        assert omega == pytest.approx(2 * math.pi * 1e6)
        assert cyclic(omega, "kHz") == pytest.approx(1e3)

    def test_unknown_unit(self):
        """Test unknown units raise."""
        with pytest.raises(ValueError):
            to_si(1.0, "furlong")
