"""
Tests for trap electrostatics, Mathieu parameters and the Duffing response.
"""

import math

import numpy as np
import pytest

from src.sim.errors import InvalidGrid, NoSolution, UnstableTrap
from src.sim.models import MicromotionProbe, TrapConfig
from src.sim.trap_model import (
    damping_for_fwhm,
    doppler_averaged_rate,
    duffing_response,
    duffing_time_domain,
    field_noise_from_heating,
    linear_response_fwhm,
    mathieu_params,
    mathieu_secular_frequencies,
    micromotion_scan,
    secular_frequencies,
)
from src.utils.constants import HBAR, TWO_PI, SweepDirection


class TestSecularFrequencies:
    """Test the pseudopotential frequency map and its calibration."""

    def test_default_operating_point(self):
        """Test the default trap sits near 1.0 / 2.5 / 2.35 MHz."""
        freqs = secular_frequencies(TrapConfig())
        assert freqs.omega_ax / TWO_PI == pytest.approx(1.0e6, rel=1e-2)
        assert freqs.omega_rad1 / TWO_PI == pytest.approx(2.5e6, rel=1e-2)
        assert freqs.omega_rad2 / TWO_PI == pytest.approx(2.35e6, rel=1e-2)

    def test_calibration_reproduces_targets(self, calibrated_trap):
        """Test calibrated kappas give back the target frequencies."""
        freqs = secular_frequencies(calibrated_trap)
        assert freqs.omega_ax == pytest.approx(TWO_PI * 1.0e6, rel=1e-9)
        assert freqs.omega_rad1 == pytest.approx(TWO_PI * 2.5e6, rel=1e-9)
        assert freqs.omega_rad2 == pytest.approx(TWO_PI * 2.35e6, rel=1e-9)

    def test_axial_scales_with_sqrt_endcap(self):
        """Test omega_ax grows as the square root of the end-cap voltage."""
        low = secular_frequencies(TrapConfig(endcap_voltage=50.0)).omega_ax
        high = secular_frequencies(TrapConfig(endcap_voltage=200.0)).omega_ax
        assert high / low == pytest.approx(2.0, rel=1e-12)

    def test_unstable_q(self):
        """Test an rf amplitude beyond the stability edge is rejected."""
        with pytest.raises(UnstableTrap):
            secular_frequencies(TrapConfig(rf_amplitude=600.0))

    def test_deconfined_radial(self):
        """Test a strong end-cap voltage deconfines a radial axis."""
        with pytest.raises(UnstableTrap) as exc_info:
            secular_frequencies(TrapConfig(endcap_voltage=1000.0))
        assert "omega_squared" in exc_info.value.details

    def test_zero_endcap_unstable(self):
        """Test no axial confinement without end-cap voltage."""
        with pytest.raises(UnstableTrap):
            secular_frequencies(TrapConfig(endcap_voltage=0.0))

    def test_calibration_needs_endcap_voltage(self, calibrated_trap):
        """Test calibration cannot reach an axial target at zero volts."""
        from src.sim.trap_model import calibrate_geometry

        targets = secular_frequencies(calibrated_trap)
        with pytest.raises(NoSolution):
            calibrate_geometry(targets, TrapConfig(endcap_voltage=0.0))


class TestMathieu:
    """Test Mathieu parameters and the characteristic-exponent frequencies."""

    def test_static_a_sums_to_zero(self, calibrated_trap):
        """Test the static a values obey Laplace's equation."""
        params = mathieu_params(calibrated_trap)
        assert sum(params.a) == pytest.approx(0.0, abs=1e-15)
        assert params.q[0] == -params.q[1]
        assert params.q[2] == 0.0

    def test_q_in_first_region(self, calibrated_trap):
        """Test the operating point sits well inside the first stability region."""
        assert 0.3 < mathieu_params(calibrated_trap).q_radial < 0.4

    def test_axial_matches_pseudopotential(self, calibrated_trap):
        """Test the axial mode has no rf contribution."""
        mathieu = mathieu_secular_frequencies(calibrated_trap)
        assert mathieu.omega_ax == pytest.approx(TWO_PI * 1.0e6, rel=1e-12)

    def test_radial_close_to_pseudopotential(self, calibrated_trap):
        """Test radial frequencies agree with the adiabatic approximation at small q."""
        mathieu = mathieu_secular_frequencies(calibrated_trap)
        pseudo = secular_frequencies(calibrated_trap)
        assert mathieu.omega_rad1 == pytest.approx(pseudo.omega_rad1, rel=5e-2)
        assert mathieu.omega_rad2 == pytest.approx(pseudo.omega_rad2, rel=5e-2)


class TestDuffing:
    """Test the driven anharmonic axial response."""

    OMEGA0 = TWO_PI * 1.0e6
    DAMPING = TWO_PI * 10e3

    def grid(self, below_hz: float, above_hz: float, points: int) -> np.ndarray:
        return np.linspace(self.OMEGA0 - TWO_PI * below_hz, self.OMEGA0 + TWO_PI * above_hz, points)

    def test_fwhm_conversion(self):
        """Test damping and linewidth conversions are inverse."""
        assert linear_response_fwhm(damping_for_fwhm(10e3)) == pytest.approx(10e3)

    def test_linear_limit(self, calibrated_trap):
        """Test alpha = 0 gives the driven harmonic oscillator with no hysteresis."""
        cfg = calibrated_trap.model_copy(update={"cubic_coefficient_alpha": 0.0})
        grid = self.grid(50e3, 50e3, 101)
        force = 1e-20
        response = duffing_response(cfg, force, self.DAMPING, grid, omega0=self.OMEGA0)
        expected = force / cfg.ion_mass / np.hypot(self.OMEGA0**2 - grid**2, self.DAMPING * grid)
        np.testing.assert_allclose(response.amplitude_up, expected, rtol=1e-9)
        np.testing.assert_allclose(response.amplitude_down, expected, rtol=1e-9)
        assert not response.bistable
        assert not response.hysteresis_mask.any()

    def test_zero_force(self, calibrated_trap):
        """Test no drive gives zero amplitude."""
        response = duffing_response(calibrated_trap, 0.0, self.DAMPING, self.grid(1e3, 1e3, 5))
        assert np.all(response.amplitude_up == 0.0)
        assert not response.bistable

    def test_hardening_hysteresis(self, calibrated_trap):
        """Test a strong drive opens a hysteresis window with the up sweep on top."""
        grid = self.grid(50e3, 600e3, 400)
        response = duffing_response(
            calibrated_trap, 5e-17, self.DAMPING, grid, omega0=self.OMEGA0
        )
        assert response.bistable
        assert response.hysteresis_mask.any()
        assert np.all(response.amplitude_up >= response.amplitude_down * (1 - 1e-9))
        # the ascending branch peaks above the linear resonance
        assert grid[np.argmax(response.amplitude_up)] > self.OMEGA0

    def test_descending_grid_rejected(self, calibrated_trap):
        """Test the grid must be strictly ascending."""
        with pytest.raises(InvalidGrid):
            duffing_response(calibrated_trap, 1e-18, self.DAMPING, self.grid(1e3, 1e3, 5)[::-1])

    def test_empty_grid_rejected(self, calibrated_trap):
        """Test an empty grid is rejected."""
        with pytest.raises(InvalidGrid):
            duffing_response(calibrated_trap, 1e-18, self.DAMPING, [])

    def test_damping_must_be_positive(self, calibrated_trap):
        """Test zero damping is rejected."""
        with pytest.raises(ValueError):
            duffing_response(calibrated_trap, 1e-18, 0.0, self.grid(1e3, 1e3, 5))

    @pytest.mark.slow
    def test_time_domain_agrees_in_linear_regime(self, calibrated_trap):
        """Test direct integration matches harmonic balance for a weak drive."""
        force = 1e-21
        response = duffing_response(
            calibrated_trap, force, self.DAMPING, [self.OMEGA0], omega0=self.OMEGA0
        )
        amplitude = duffing_time_domain(
            calibrated_trap, force, self.DAMPING, self.OMEGA0, omega0=self.OMEGA0
        )
        assert amplitude == pytest.approx(float(response.amplitude_up[0]), rel=3e-3)

    def branch_start(self, cfg, omega, amplitude):
        """Initial (x, v) on the harmonic-balance orbit A cos(w t - phi)."""
        cubic = 0.75 * cfg.cubic_coefficient_alpha / cfg.ion_mass
        stiffness = self.OMEGA0**2 - omega**2 + cubic * amplitude**2
        phi = math.atan2(self.DAMPING * omega, stiffness)
        return amplitude * math.cos(phi), amplitude * omega * math.sin(phi)

    def root_count(self, cfg, force, omega):
        response = duffing_response(cfg, force, self.DAMPING, [omega], omega0=self.OMEGA0)
        return 1 if response.amplitude_up[0] == response.amplitude_down[0] else 2

    def draw_case(self, cfg, rng):
        """Random drive away from the fold points of the response curve."""
        while True:
            force = 10 ** rng.uniform(-19.0, math.log10(1.5e-17))
            linear = force / (cfg.ion_mass * self.OMEGA0 * self.DAMPING)
            shift = 0.375 * cfg.cubic_coefficient_alpha / cfg.ion_mass * linear**2 / self.OMEGA0
            span = (-3.0 * self.DAMPING, 1.2 * shift + 2.0 * self.DAMPING)
            omega = self.OMEGA0 + rng.uniform(*span)
            counts = {
                self.root_count(cfg, force, omega + k * self.DAMPING / 4) for k in (-1, 0, 1)
            }
            if len(counts) == 1:
                return force, omega

    @pytest.mark.slow
    @pytest.mark.parametrize("seed", range(20))
    def test_time_domain_agrees_on_every_branch(self, calibrated_trap, seed):
        """Test integration started on each stable branch stays within 2% of it."""
        cfg = calibrated_trap
        assert cfg.cubic_coefficient_alpha == pytest.approx(TWO_PI**2 * 1.74e-7)
        force, omega = self.draw_case(cfg, np.random.default_rng(seed))
        response = duffing_response(cfg, force, self.DAMPING, [omega], omega0=self.OMEGA0)
        for amplitude in {float(response.amplitude_up[0]), float(response.amplitude_down[0])}:
            x0, v0 = self.branch_start(cfg, omega, amplitude)
            measured = duffing_time_domain(
                cfg, force, self.DAMPING, omega, x0=x0, v0=v0, omega0=self.OMEGA0
            )
            assert measured == pytest.approx(amplitude, rel=0.02)

    @pytest.mark.slow
    def test_time_domain_reproduces_hysteresis(self, calibrated_trap):
        """Test a strong drive holds both the large and the small orbit at one frequency."""
        cfg, force = calibrated_trap, 1.5e-17
        grid = self.grid(20e3, 60e3, 321)
        response = duffing_response(cfg, force, self.DAMPING, grid, omega0=self.OMEGA0)
        window = np.flatnonzero(response.hysteresis_mask)
        i = int(window[window.size // 2])
        omega = float(grid[i])
        high, low = float(response.amplitude_up[i]), float(response.amplitude_down[i])
        assert high > 1.5 * low
        measured = []
        for amplitude in (high, low):
            x0, v0 = self.branch_start(cfg, omega, amplitude)
            orbit = duffing_time_domain(
                cfg, force, self.DAMPING, omega, x0=x0, v0=v0, omega0=self.OMEGA0
            )
            measured.append(orbit)
        assert measured[0] == pytest.approx(high, rel=0.02)
        assert measured[1] == pytest.approx(low, rel=0.02)


class TestMicromotionScan:
    """Test the fluorescence map of the compensation scan."""

    def test_doppler_average_at_rest(self):
        """Test zero modulation gives the saturated Lorentzian."""
        gamma, detuning, s = TWO_PI * 21.5e6, TWO_PI * -5e6, 0.6
        rate = float(doppler_averaged_rate(0.0, detuning, gamma, s))
        expected = gamma * s / 2 / (1 + s + (2 * detuning / gamma) ** 2)
        assert rate == pytest.approx(expected, rel=1e-12)

    def test_doppler_average_matches_numeric(self):
        """Test the closed form against a direct phase average."""
        gamma, detuning, s = TWO_PI * 21.5e6, TWO_PI * -5e6, 0.6
        amplitude = TWO_PI * 15e6
        phase = np.linspace(0.0, TWO_PI, 20000, endpoint=False)
        shifted = detuning - amplitude * np.cos(phase)
        numeric = np.mean(gamma * s / 2 / (1 + s + (2 * shifted / gamma) ** 2))
        closed = float(doppler_averaged_rate(amplitude, detuning, gamma, s))
        assert closed == pytest.approx(numeric, rel=1e-6)

    def test_compensated_row_is_flat(self, calibrated_trap):
        """Test the drive nulls at v_opt and the far row loses fluorescence on resonance."""
        probe = MicromotionProbe()
        volts = np.array([-0.1, 0.9])
        freqs = np.linspace(TWO_PI * 0.95e6, TWO_PI * 1.1e6, 61)
        curve = micromotion_scan(
            calibrated_trap, -0.1, volts, freqs, SweepDirection.UP, probe
        )
        assert curve.y.shape == (2, 61)
        det = probe.detection
        rest = (det.bright_rate + det.dark_rate) * det.detection_time
        np.testing.assert_allclose(curve.y[0], rest, rtol=1e-12)
        assert curve.y[1].min() < 0.5 * rest
        assert curve.y.min() >= det.dark_rate * det.detection_time

    def test_empty_voltage_grid(self, calibrated_trap):
        """Test an empty voltage grid is rejected."""
        with pytest.raises(InvalidGrid):
            micromotion_scan(calibrated_trap, 0.0, [], [TWO_PI * 1e6])


class TestFieldNoise:
    """Test the heating-rate to field-noise conversion."""

    def test_formula(self, calibrated_trap):
        """Test S_E = 4 m hbar omega n_dot / e^2."""
        omega = TWO_PI * 1e6
        noise = field_noise_from_heating(16.0, omega, calibrated_trap)
        cfg = calibrated_trap
        expected = 4 * cfg.ion_mass * HBAR * omega * 16.0 / cfg.ion_charge**2
        assert noise["S_E"] == pytest.approx(expected)
        assert noise["omega_S_E"] == pytest.approx(omega * expected)

    def test_negative_rate(self, calibrated_trap):
        """Test negative heating rates are rejected."""
        with pytest.raises(ValueError):
            field_noise_from_heating(-1.0, TWO_PI * 1e6, calibrated_trap)

    def test_zero_rate(self, calibrated_trap):
        """Test zero heating means zero noise."""
        assert field_noise_from_heating(0.0, TWO_PI * 1e6, calibrated_trap)["S_E"] == 0.0
        assert math.isfinite(field_noise_from_heating(1.0, TWO_PI * 1e6, calibrated_trap)["S_E"])
