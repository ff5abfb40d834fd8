"""
Trap electrostatics, Mathieu stability and the nonlinear axial response.

Covers the voltage to secular-frequency map and its inverse calibration,
Mathieu parameters, the driven Duffing response used by the micromotion
compensation scan, and the conversion of a heating rate into electric field
noise.
"""

from __future__ import annotations

import logging
import math
from typing import Dict, Optional

import numpy as np
from numpy.typing import ArrayLike
from scipy.integrate import solve_ivp

from ..utils.constants import HBAR, TWO_PI, SweepDirection
from .errors import InvalidGrid, NoSolution, UnstableTrap
from .models import (
    DuffingResponse,
    MathieuParams,
    MicromotionProbe,
    SecularFrequencies,
    SignalCurve,
    TrapConfig,
)

logger = logging.getLogger(__name__)

# Edge of the first stability region along a = 0
Q_STABILITY_LIMIT = 0.908

# Relative tolerance for treating a cubic root as real
_REAL_ROOT_TOL = 1e-7


def _axial_squared(cfg: TrapConfig) -> float:
    return (
        2.0 * cfg.ion_charge * cfg.kappa_axial * cfg.endcap_voltage
        / (cfg.ion_mass * cfg.ion_endcap_distance**2)
    )


def _pseudopotential(cfg: TrapConfig) -> float:
    return (
        cfg.ion_charge * cfg.kappa_radial * cfg.rf_amplitude
        / (math.sqrt(2.0) * cfg.ion_mass * cfg.rf_frequency * cfg.ion_electrode_distance**2)
    )


def _bias_squared(cfg: TrapConfig) -> float:
    return (
        2.0 * cfg.ion_charge * cfg.kappa_bias * cfg.radial_bias
        / (cfg.ion_mass * cfg.ion_electrode_distance**2)
    )


def secular_frequencies(cfg: TrapConfig) -> SecularFrequencies:
    """
    Secular frequencies in the pseudopotential approximation.

    Args:
        cfg: Trap configuration.

    Returns:
        Axial and the two radial angular frequencies.

    Raises:
        UnstableTrap: A squared frequency is not positive or q exceeds the
            stability edge.
    """
    w_ax2 = _axial_squared(cfg)
    w_ps = _pseudopotential(cfg)
    delta2 = _bias_squared(cfg)

    q = 2.0 * math.sqrt(2.0) * w_ps / cfg.rf_frequency
    if q >= Q_STABILITY_LIMIT:
        raise UnstableTrap(f"q_radial = {q:.4f} is outside the stability region")

    squares = (w_ax2, w_ps**2 + delta2 - w_ax2 / 2.0, w_ps**2 - delta2 - w_ax2 / 2.0)
    if min(squares) <= 0.0:
        raise UnstableTrap(
            "trap is not confining along every axis",
            details={"omega_squared": list(squares)},
        )
    return SecularFrequencies(
        omega_ax=math.sqrt(squares[0]),
        omega_rad1=math.sqrt(squares[1]),
        omega_rad2=math.sqrt(squares[2]),
    )


def calibrate_geometry(targets: SecularFrequencies, cfg: TrapConfig) -> TrapConfig:
    """
    Fix the geometric efficiencies so ``cfg`` reproduces ``targets``.

    The axial target sets kappa_axial, the mean of the radial pair sets
    kappa_radial and their splitting sets kappa_bias.

    Raises:
        NoSolution: A voltage needed to reach a target is zero or the radial
            targets would require an unstable rf drive.
    """
    m, e = cfg.ion_mass, cfg.ion_charge
    r0, z0 = cfg.ion_electrode_distance, cfg.ion_endcap_distance
    w_ax, w_1, w_2 = targets.as_tuple()

    if cfg.endcap_voltage == 0.0:
        raise NoSolution("an axial target needs a non-zero end-cap voltage")
    kappa_axial = w_ax**2 * m * z0**2 / (2.0 * e * cfg.endcap_voltage)

    # w_1^2 + w_2^2 = 2 w_ps^2 - w_ax^2 and w_1^2 - w_2^2 = 2 delta^2
    w_ps = math.sqrt((w_1**2 + w_2**2 + w_ax**2) / 2.0)
    delta2 = (w_1**2 - w_2**2) / 2.0

    if 2.0 * math.sqrt(2.0) * w_ps / cfg.rf_frequency >= Q_STABILITY_LIMIT:
        raise NoSolution("radial targets need q beyond the stability edge")
    if cfg.rf_amplitude == 0.0:
        raise NoSolution("radial targets need a non-zero rf amplitude")
    kappa_radial = w_ps * math.sqrt(2.0) * m * cfg.rf_frequency * r0**2 / (e * cfg.rf_amplitude)

    if delta2 == 0.0:
        kappa_bias = 0.0
    elif cfg.radial_bias == 0.0:
        raise NoSolution("a radial splitting needs a non-zero bias voltage")
    else:
        kappa_bias = delta2 * m * r0**2 / (2.0 * e * cfg.radial_bias)

    logger.debug(
        "Calibrated kappa_axial=%.6g kappa_radial=%.6g kappa_bias=%.6g",
        kappa_axial,
        kappa_radial,
        kappa_bias,
    )
    return cfg.model_copy(
        update={
            "kappa_axial": kappa_axial,
            "kappa_radial": kappa_radial,
            "kappa_bias": kappa_bias,
        }
    )


def mathieu_params(cfg: TrapConfig) -> MathieuParams:
    """Mathieu a and q along (x, y, z); the static a values sum to zero."""
    omega = cfg.rf_frequency
    q_r = (
        2.0 * cfg.ion_charge * cfg.kappa_radial * cfg.rf_amplitude
        / (cfg.ion_mass * omega**2 * cfg.ion_electrode_distance**2)
    )
    w_ax2 = _axial_squared(cfg)
    delta2 = _bias_squared(cfg)
    scale = 4.0 / omega**2
    a_x = scale * (delta2 - w_ax2 / 2.0)
    a_y = scale * (-delta2 - w_ax2 / 2.0)
    # z closes the sum exactly
    a_z = -(a_x + a_y)
    return MathieuParams(a=(a_x, a_y, a_z), q=(q_r, -q_r, 0.0))


def _beta_squared(a: float, q: float) -> float:
    q2 = q * q
    return (
        a
        + (0.5 + a / 2.0) * q2
        + (25.0 / 128.0 + 273.0 * a / 512.0) * q2**2
        + (317.0 / 2304.0 + 59525.0 * a / 82944.0) * q2**3
    )


def mathieu_secular_frequencies(cfg: TrapConfig) -> SecularFrequencies:
    """
    Secular frequencies from the Mathieu characteristic exponent series.

    Raises:
        UnstableTrap: beta^2 <= 0 or beta >= 1 along some axis.
    """
    params = mathieu_params(cfg)
    omegas = []
    for a, q in zip(params.a, params.q):
        beta2 = _beta_squared(a, q)
        if beta2 <= 0.0 or beta2 >= 1.0:
            raise UnstableTrap(f"beta^2 = {beta2:.4g} outside (0, 1) at a={a:.4g}, q={q:.4g}")
        omegas.append(math.sqrt(beta2) * cfg.rf_frequency / 2.0)
    x, y, z = omegas
    return SecularFrequencies(omega_ax=z, omega_rad1=x, omega_rad2=y)


# Duffing response


def damping_for_fwhm(fwhm_hz: float) -> float:
    """Damping rate whose linear power response has the given FWHM in Hz."""
    return TWO_PI * fwhm_hz


def linear_response_fwhm(damping: float) -> float:
    """FWHM in Hz of the linear power response for a damping rate."""
    return damping / TWO_PI


def _branch_amplitudes(
    omega0: float, nonlinearity: float, force: float, damping: float, omega: float
) -> np.ndarray:
    """Sorted positive steady-state amplitudes at one drive frequency."""
    if force == 0.0:
        return np.zeros(1)
    detune = omega0**2 - omega**2
    width = damping * omega
    if nonlinearity == 0.0:
        return np.array([force / math.hypot(detune, width)])

    # u = g A^2 / (gamma w) turns the cubic into u^3 + 2D u^2 + (D^2 + 1) u - P = 0
    d = detune / width
    p = force**2 * nonlinearity / width**3
    roots = np.roots([1.0, 2.0 * d, d * d + 1.0, -p])
    real = roots[np.abs(roots.imag) <= _REAL_ROOT_TOL * np.maximum(1.0, np.abs(roots))].real
    # roots spread over many decades; polish the small one against cancellation
    def cubic(u: np.ndarray) -> np.ndarray:
        return ((u + 2.0 * d) * u + d * d + 1.0) * u - p

    for _ in range(3):
        slope = 3.0 * real**2 + 4.0 * d * real + d * d + 1.0
        step = np.divide(cubic(real), slope, out=np.zeros_like(real), where=slope != 0.0)
        polished = real - step
        real = np.where(np.abs(cubic(polished)) < np.abs(cubic(real)), polished, real)
    y = real * width / nonlinearity
    y = np.sort(y[y > 0.0])
    if y.size == 0:
        # the cubic always has one positive root; guard against rounding
        y = np.array([max(real.max() * width / nonlinearity, 0.0)])
    return np.sqrt(y)


def _continue_branch(
    candidates: list[np.ndarray], start_high: bool
) -> np.ndarray:
    """Follow the outer roots by continuity; the middle (unstable) root is never chosen."""
    out = np.empty(len(candidates))
    previous: Optional[float] = None
    for i, roots in enumerate(candidates):
        outer = (roots[0], roots[-1])
        if previous is None:
            choice = outer[1] if start_high else outer[0]
        else:
            choice = min(outer, key=lambda a: abs(a - previous))
        out[i] = choice
        previous = choice
    return out


def duffing_response(
    cfg: TrapConfig,
    drive_force: float,
    damping: float,
    freq_grid: ArrayLike,
    omega0: Optional[float] = None,
) -> DuffingResponse:
    """
    Steady-state amplitude of the driven axial Duffing oscillator.

    Solves the harmonic-balance amplitude equation
    A^2 [(w0^2 - w^2 + (3/4)(alpha/m) A^2)^2 + (gamma w)^2] = (F/m)^2
    and follows the stable branches for an ascending and a descending sweep.

    Args:
        cfg: Trap configuration (mass, alpha and, unless overridden, w0).
        drive_force: Resonant force amplitude F (N).
        damping: Velocity damping rate gamma (1/s).
        freq_grid: Ascending drive angular frequencies (rad/s).
        omega0: Linear resonance; defaults to the axial secular frequency.

    Returns:
        DuffingResponse with both sweep branches and the bistability flag.

    Raises:
        InvalidGrid: Empty or non-ascending grid.
        ValueError: Non-positive damping.
    """
    grid = np.asarray(freq_grid, dtype=float)
    if grid.ndim != 1 or grid.size == 0:
        raise InvalidGrid("frequency grid must be a non-empty 1-D array")
    if np.any(np.diff(grid) <= 0):
        raise InvalidGrid("frequency grid must be strictly ascending")
    if damping <= 0:
        raise ValueError("damping must be positive")

    if omega0 is None:
        omega0 = secular_frequencies(cfg).omega_ax
    force = abs(drive_force) / cfg.ion_mass
    nonlinearity = 0.75 * cfg.cubic_coefficient_alpha / cfg.ion_mass

    candidates = [
        _branch_amplitudes(omega0, nonlinearity, force, damping, w) for w in grid
    ]
    bistable = any(len(c) >= 3 for c in candidates)

    # hardening: arriving from below rides the large branch
    hardening = nonlinearity >= 0
    up = _continue_branch(candidates, start_high=hardening)
    down = _continue_branch(candidates[::-1], start_high=not hardening)[::-1]

    if bistable:
        logger.debug(
            "Bistable response over %d of %d grid points",
            sum(len(c) >= 3 for c in candidates),
            grid.size,
        )
    return DuffingResponse(
        drive_frequency_grid=grid,
        amplitude_up=up,
        amplitude_down=down,
        bistable=bistable,
    )


def duffing_time_domain(
    cfg: TrapConfig,
    drive_force: float,
    damping: float,
    drive_frequency: float,
    periods: int = 400,
    x0: float = 0.0,
    v0: float = 0.0,
    omega0: Optional[float] = None,
    measure_periods: int = 10,
) -> float:
    """
    Steady-state amplitude by direct integration of the equation of motion.

    x'' + gamma x' + w0^2 x + (alpha/m) x^3 = (F/m) cos(w t), integrated in
    units of 1/w0 and of the static displacement F/(m w0^2).

    Args:
        cfg: Trap configuration.
        drive_force: Force amplitude (N).
        damping: Damping rate (1/s).
        drive_frequency: Drive angular frequency (rad/s).
        periods: Drive periods to settle before measuring.
        x0: Initial displacement (m).
        v0: Initial velocity (m/s).
        omega0: Linear resonance; defaults to the axial secular frequency.
        measure_periods: Drive periods over which the amplitude is read.

    Returns:
        Half the peak-to-peak displacement over the measuring window (m).
    """
    if omega0 is None:
        omega0 = secular_frequencies(cfg).omega_ax
    if drive_force == 0.0 and x0 == 0.0 and v0 == 0.0:
        return 0.0

    scale = abs(drive_force) / (cfg.ion_mass * omega0**2) if drive_force else 1.0
    gamma = damping / omega0
    ratio = drive_frequency / omega0
    cubic = cfg.cubic_coefficient_alpha * scale**2 / (cfg.ion_mass * omega0**2)
    drive = 1.0 if drive_force else 0.0

    def rhs(tau: float, state: np.ndarray) -> list[float]:
        xi, vi = state
        return [vi, drive * math.cos(ratio * tau) - gamma * vi - xi - cubic * xi**3]

    period = TWO_PI / ratio
    t_settle = periods * period
    t_end = t_settle + measure_periods * period
    samples = np.linspace(t_settle, t_end, 64 * measure_periods + 1)
    sol = solve_ivp(
        rhs,
        (0.0, t_end),
        [x0 / scale, v0 / (scale * omega0)],
        method="DOP853",
        t_eval=samples,
        rtol=1e-9,
        atol=1e-12,
    )
    if not sol.success:
        raise RuntimeError(f"ODE integration failed: {sol.message}")
    xi = sol.y[0]
    return float((xi.max() - xi.min()) / 2.0 * scale)


# Micromotion compensation scan


def doppler_averaged_rate(
    doppler_amplitude: ArrayLike,
    detuning: float,
    linewidth: float,
    saturation: float,
) -> np.ndarray:
    """
    Scattering rate averaged over a sinusoidal Doppler modulation.

    Exact time average of Gamma (s/2) / (1 + s + (2 (detuning - k v cos t) / Gamma)^2)
    over one oscillation, for Doppler amplitude k v (rad/s).

    Args:
        doppler_amplitude: Peak Doppler shift (rad/s).
        detuning: Laser detuning (rad/s).
        linewidth: Natural linewidth Gamma (rad/s).
        saturation: I/I_sat.

    Returns:
        Mean scattering rate (1/s).
    """
    broadened = linewidth * math.sqrt(1.0 + saturation)
    x = 2.0 * detuning / broadened
    u = 2.0 * np.asarray(doppler_amplitude, dtype=float) / broadened
    mean_lorentzian = np.real(1.0 / np.sqrt((1.0 - 1j * x) ** 2 + u**2 + 0j))
    return linewidth * (saturation / 2.0) / (1.0 + saturation) * mean_lorentzian


def micromotion_scan(
    cfg: TrapConfig,
    v_opt: float,
    v_grid: ArrayLike,
    f_grid: ArrayLike,
    sweep: SweepDirection = SweepDirection.UP,
    lineshape: Optional[MicromotionProbe] = None,
) -> SignalCurve:
    """
    Fluorescence map over compensation voltage and drive frequency.

    The injected drive mixes down to a resonant force c |V - v_opt| at the
    axial mode, whose frequency shifts linearly with V. The Duffing
    amplitude then Doppler-modulates the cooling fluorescence.

    Args:
        cfg: Trap configuration.
        v_opt: Compensation voltage at which the drive nulls (V).
        v_grid: Compensation voltages (V).
        f_grid: Ascending mixed-down drive angular frequencies (rad/s).
        sweep: Drive-frequency sweep direction.
        lineshape: Probe and detection parameters.

    Returns:
        SignalCurve map with x = v_grid, x2 = f_grid and y = counts per
        detection window, shape (len(v_grid), len(f_grid)).
    """
    probe = lineshape or MicromotionProbe()
    volts = np.asarray(v_grid, dtype=float)
    freqs = np.asarray(f_grid, dtype=float)
    if volts.ndim != 1 or volts.size == 0:
        raise InvalidGrid("voltage grid must be a non-empty 1-D array")

    omega_ax = secular_frequencies(cfg).omega_ax
    gamma = TWO_PI * probe.linewidth * 1e6
    detuning = TWO_PI * probe.detuning * 1e6
    k = TWO_PI / probe.wavelength * probe.projection
    rest_rate = float(doppler_averaged_rate(0.0, detuning, gamma, probe.saturation))

    det = probe.detection
    counts = np.empty((volts.size, freqs.size))
    for i, volt in enumerate(volts):
        offset = volt - v_opt
        response = duffing_response(
            cfg,
            drive_force=probe.mixing_coefficient * abs(offset),
            damping=probe.damping,
            freq_grid=freqs,
            omega0=omega_ax + TWO_PI * probe.frequency_slope * offset,
        )
        amplitude = response.amplitude_up if sweep == SweepDirection.UP else response.amplitude_down
        ratio = doppler_averaged_rate(k * amplitude * freqs, detuning, gamma, probe.saturation)
        counts[i] = (det.bright_rate * ratio / rest_rate + det.dark_rate) * det.detection_time

    logger.debug("Micromotion map %dx%d (%s sweep)", volts.size, freqs.size, sweep.value)
    return SignalCurve(
        x=volts, x2=freqs, y=counts, kind="counts", x_unit="V", y_unit="counts"
    )


def field_noise_from_heating(
    heating_rate: float, omega_ax: float, cfg: TrapConfig
) -> Dict[str, float]:
    """
    Electric field noise implied by a heating rate.

    S_E = 4 m hbar w n_dot / e^2; also returns w S_E.
    """
    if heating_rate < 0:
        raise ValueError("heating rate must be non-negative")
    s_e = 4.0 * cfg.ion_mass * HBAR * omega_ax * heating_rate / cfg.ion_charge**2
    return {"S_E": s_e, "omega_S_E": omega_ax * s_e}
