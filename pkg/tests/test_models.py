"""
Tests for the simulator's data models.
"""

import math

import numpy as np
import pytest
from pydantic import ValidationError

from src.sim.models import (
    DecayChannel,
    DetectionModel,
    LaserField,
    Level,
    LevelScheme,
    SignalCurve,
    ThermalState,
    TrapConfig,
)


class TestLaserField:
    """Test LaserField validation and polarization handling."""

    def test_named_polarization(self):
        """Test sigma+ light has only the q = +1 component."""
        field = LaserField(transition=("S1/2", "P1/2"), polarization="sigma+")
        components = field.spherical_components()
        assert abs(components[1]) == pytest.approx(1.0)
        assert abs(components[0]) == pytest.approx(0.0)
        assert abs(components[-1]) == pytest.approx(0.0)

    def test_linear_polarization_splits(self):
        """Test x light drives sigma+ and sigma- equally."""
        field = LaserField(transition=("D3/2", "P1/2"), polarization="x")
        components = field.spherical_components()
        assert abs(components[1]) == pytest.approx(math.sqrt(0.5))
        assert abs(components[-1]) == pytest.approx(math.sqrt(0.5))

    def test_unnormalized_vector(self):
        """Test polarization vectors must have unit norm."""
        with pytest.raises(ValidationError):
            LaserField(transition=("S1/2", "P1/2"), polarization=[1.0, 1.0, 0.0])

    def test_negative_saturation(self):
        """Test saturation cannot be negative."""
        with pytest.raises(ValidationError):
            LaserField(transition=("S1/2", "P1/2"), saturation=-0.1)

    def test_frozen(self):
        """Test fields are immutable."""
        field = LaserField(transition=("S1/2", "P1/2"))
        with pytest.raises(ValidationError):
            field.detuning = 3.0


class TestLevelScheme:
    """Test level and decay-channel consistency checks."""

    def levels(self):
        return [Level(label="g", j=0.5, g_factor=2.0), Level(label="e", j=0.5, g_factor=0.67)]

    def test_half_integer_j(self):
        """Test J must be a half-integer."""
        with pytest.raises(ValidationError):
            Level(label="x", j=0.3, g_factor=1.0)

    def test_sublevels(self):
        """Test a J = 3/2 level has four sublevels."""
        assert Level(label="D", j=1.5, g_factor=0.8).sublevels == [-1.5, -0.5, 0.5, 1.5]

    def test_branching_must_sum_to_one(self):
        """Test branching ratios out of one level must sum to one."""
        with pytest.raises(ValidationError):
            LevelScheme(
                levels=self.levels(),
                decay_channels=[DecayChannel(upper="e", lower="g", rate=1e8, branching=0.9)],
            )

    def test_unknown_level_in_channel(self):
        """Test channels must reference declared levels."""
        with pytest.raises(ValidationError):
            LevelScheme(
                levels=self.levels(),
                decay_channels=[DecayChannel(upper="e", lower="h", rate=1e8, branching=1.0)],
            )

    def test_two_level_scheme(self):
        """Test a closed two-level scheme."""
        scheme = LevelScheme(
            levels=self.levels(),
            decay_channels=[DecayChannel(upper="e", lower="g", rate=1e8, branching=1.0)],
        )
        assert scheme.dimension == 4
        assert scheme.total_decay_rate("e") == pytest.approx(1e8)
        assert scheme.channel("g", "e").partial_rate == pytest.approx(1e8)


class TestThermalState:
    """Test truncated thermal states."""

    def test_cutoff_meets_tail(self):
        """Test the truncation leaves less than the requested tail mass."""
        state = ThermalState.from_nbar(1.0, 1e-6)
        assert state.n_max == 20
        assert state.tail_mass < 1e-6

    def test_ground_state(self):
        """Test nbar = 0 needs no excited levels."""
        state = ThermalState.from_nbar(0.0)
        assert state.n_max == 0
        assert state.tail_mass == 0.0


class TestSignalCurve:
    """Test SignalCurve shape checks."""

    def test_length_mismatch(self):
        """Test x and y must have equal length."""
        with pytest.raises(ValidationError):
            SignalCurve(x=[0.0, 1.0], y=[0.0])

    def test_probability_range(self):
        """Test probability curves stay in [0, 1]."""
        with pytest.raises(ValidationError):
            SignalCurve(x=[0.0], y=[1.5], kind="probability")

    def test_map_shape(self):
        """Test a map is indexed by (x, x2)."""
        curve = SignalCurve(x=[0.0, 1.0], x2=[0.0, 1.0, 2.0], y=np.zeros((2, 3)))
        assert len(curve) == 2


class TestParameterModels:
    """Test defaults of the trap and detection models."""

    def test_trap_defaults(self):
        """Test the default trap operating point."""
        trap = TrapConfig()
        assert trap.rf_amplitude == 200.0
        assert trap.endcap_voltage == 50.0
        assert trap.ion_mass > 0

    def test_detection_rejects_negative_rate(self):
        """Test count rates are non-negative."""
        with pytest.raises(ValidationError):
            DetectionModel(bright_rate=-1.0)
