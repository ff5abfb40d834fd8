"""
Motional thermometry, sideband cooling and Zeeman-qubit coherence.

Rabi probabilities follow P = sin^2(Omega t / 2) with Omega the Rabi
angular frequency, for the carrier and both sidebands.
"""

from __future__ import annotations

import logging
import math
from typing import List, Optional, Tuple

import numpy as np
from numpy.typing import ArrayLike
from scipy.linalg import expm
from scipy.special import eval_genlaguerre

from ..utils.constants import HBAR, TWO_PI, PhasePolicy, get_constants
from .errors import ExpansionInvalid, InvalidGrid, TruncationTooSmall
from .models import (
    CoolingProtocol,
    CoolingResult,
    MagneticNoiseModel,
    SidebandDrive,
    SignalCurve,
    ThermalState,
)

logger = logging.getLogger(__name__)

TAIL_LIMIT = 1e-6
EXPANSION_LIMIT = 0.5


def _grid(values: ArrayLike, name: str) -> np.ndarray:
    grid = np.asarray(values, dtype=float)
    if grid.ndim != 1 or grid.size == 0:
        raise InvalidGrid(f"{name} must be a non-empty 1-D array")
    return grid


def lamb_dicke_parameter(
    wavelength: float, angle: float, omega_ax: float, mass: Optional[float] = None
) -> float:
    """eta = k cos(angle) sqrt(hbar / (2 m omega))."""
    mass = mass or get_constants().ion_mass
    return TWO_PI / wavelength * math.cos(angle) * math.sqrt(HBAR / (2.0 * mass * omega_ax))


def doppler_limit_nbar(omega_ax: float, linewidth: float) -> float:
    """Mean occupation at the Doppler limit, k_B T = hbar Gamma / 2."""
    ratio = linewidth / (2.0 * omega_ax)
    # Bose occupation at T_D, close to Gamma / (2 omega) when that is large
    return 1.0 / math.expm1(1.0 / ratio)


def thermal_distribution(state: ThermalState) -> np.ndarray:
    """
    P(n) = (1/(nbar+1)) (nbar/(nbar+1))^n for n = 0..n_max.

    Raises:
        TruncationTooSmall: Tail mass beyond n_max exceeds 1e-6.
    """
    if state.tail_mass > TAIL_LIMIT:
        raise TruncationTooSmall(
            f"n_max = {state.n_max} leaves tail mass {state.tail_mass:.2e} for nbar = {state.nbar}"
        )
    n = np.arange(state.n_max + 1)
    if state.nbar == 0:
        dist = np.zeros(n.size)
        dist[0] = 1.0
        return dist
    ratio = state.nbar / (state.nbar + 1.0)
    return ratio**n / (state.nbar + 1.0)


def heating_nbar(nbar0: float, rate: float, delays: ArrayLike) -> np.ndarray:
    """Linear heating n(t) = nbar0 + rate * t."""
    return nbar0 + rate * np.asarray(delays, dtype=float)


def laguerre_rabi(eta: float, omega0: float, n: ArrayLike) -> np.ndarray:
    """Carrier Rabi frequencies Omega0 exp(-eta^2/2) L_n(eta^2)."""
    return omega0 * math.exp(-(eta**2) / 2) * eval_genlaguerre(np.asarray(n), 0, eta**2)


def carrier_rabi_signal(
    state: ThermalState,
    drive: SidebandDrive,
    t_grid: ArrayLike,
    exact: bool = False,
) -> SignalCurve:
    """
    Thermally averaged carrier excitation.

    P_D(t) = sum_n P(n) sin^2(Omega_n t / 2) with Omega_n = Omega0 (1 - eta^2 n),
    or the full Laguerre form when ``exact``.

    Raises:
        ValueError: drive is not on the carrier.
        ExpansionInvalid: eta^2 n_max >= 0.5 without ``exact``.
    """
    if drive.order != 0:
        raise ValueError("carrier_rabi_signal needs a carrier drive (order 0)")
    t = _grid(t_grid, "time grid")
    dist = thermal_distribution(state)
    n = np.arange(dist.size)
    if exact:
        rabi = laguerre_rabi(drive.eta, drive.omega0, n)
    else:
        if drive.eta**2 * state.n_max >= EXPANSION_LIMIT:
            raise ExpansionInvalid(
                f"eta^2 n_max = {drive.eta**2 * state.n_max:.3f} is not small"
            )
        rabi = drive.omega0 * (1.0 - drive.eta**2 * n)
    y = np.sin(np.outer(t, rabi) / 2.0) ** 2 @ dist
    return SignalCurve(x=t, y=np.clip(y, 0.0, 1.0), kind="probability", x_unit="s")


def _sideband_rabi(drive: SidebandDrive, n: np.ndarray) -> np.ndarray:
    if drive.order == -1:
        return drive.eta * drive.omega0 * np.sqrt(n)
    return drive.eta * drive.omega0 * np.sqrt(n + 1.0)


def _detuned_excitation(rabi: np.ndarray, detuning: ArrayLike, t: float) -> np.ndarray:
    """Generalized Rabi formula, rows over detuning, columns over n."""
    delta = np.atleast_1d(np.asarray(detuning, dtype=float))[:, None]
    general = np.sqrt(rabi**2 + delta**2)
    with np.errstate(invalid="ignore", divide="ignore"):
        weight = np.where(general > 0, rabi**2 / general**2, 0.0)
    return weight * np.sin(general * t / 2.0) ** 2


def sideband_excitation(state: ThermalState, drive: SidebandDrive, t: float) -> float:
    """
    Thermally averaged excitation of the red (order -1) or blue (+1) sideband.

    Omega_n^r = eta Omega0 sqrt(n), Omega_n^b = eta Omega0 sqrt(n + 1); the
    drive detuning from the sideband line is included.
    """
    if drive.order not in (-1, 1):
        raise ValueError("sideband_excitation needs order -1 or +1")
    if t < 0:
        raise ValueError("pulse time must be non-negative")
    dist = thermal_distribution(state)
    n = np.arange(dist.size)
    rabi = _sideband_rabi(drive, n)
    excitation = _detuned_excitation(rabi, drive.detuning, t)[0]
    return float(np.clip(excitation @ dist, 0.0, 1.0))


def sideband_spectrum(
    state: ThermalState,
    drive: SidebandDrive,
    detuning_grid: ArrayLike,
    carrier_offset: float = 0.0,
    omega_ax: float = TWO_PI * 1e6,
) -> SignalCurve:
    """
    Excitation versus 674 nm detuning across both sidebands.

    Sinc-broadened red and blue lines at -omega_ax and +omega_ax for a pulse
    of ``drive.duration``, on top of a constant carrier background.

    Args:
        state: Thermal state.
        drive: Pulse (eta, Omega0, duration); order and detuning are ignored.
        detuning_grid: Laser detuning from the carrier (rad/s).
        carrier_offset: Constant off-resonant carrier excitation.
        omega_ax: Axial frequency (rad/s).
    """
    grid = _grid(detuning_grid, "detuning grid")
    if not 0.0 <= carrier_offset <= 1.0:
        raise ValueError("carrier_offset must be a probability")
    dist = thermal_distribution(state)
    n = np.arange(dist.size)
    red = _sideband_rabi(drive.model_copy(update={"order": -1}), n)
    blue = _sideband_rabi(drive.model_copy(update={"order": 1}), n)
    y = (
        _detuned_excitation(red, grid + omega_ax, drive.duration) @ dist
        + _detuned_excitation(blue, grid - omega_ax, drive.duration) @ dist
        + carrier_offset
    )
    return SignalCurve(x=grid, y=np.clip(y, 0.0, 1.0), kind="probability", x_unit="rad/s")


def _cooling_rates(protocol: CoolingProtocol, n: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Down and up transition rates n -> n-1 and n -> n+1 of the quenched RSB drive."""
    gamma = protocol.quench_rate
    coupling = protocol.eta**2 * protocol.cooling_rabi**2
    # saturating red-sideband pump through the quench-broadened line
    saturation = 2.0 * n * coupling / gamma**2
    down = 0.5 * gamma * saturation / (1.0 + saturation)
    if not protocol.heating_enabled:
        return down, np.zeros_like(down)
    quarter = gamma**2 / 4.0
    omega = protocol.omega_ax
    # off-resonant carrier then blue-sideband decay, plus spontaneous-emission recoil
    up = (n + 1.0) * coupling / gamma * (
        quarter / (quarter + 4.0 * omega**2)
        + protocol.recoil_factor * quarter / (quarter + omega**2)
    )
    return down, up


def _continuous_generator(protocol: CoolingProtocol, size: int) -> np.ndarray:
    n = np.arange(size, dtype=float)
    down, up = _cooling_rates(protocol, n)
    up[-1] = 0.0  # reflecting truncation
    generator = np.zeros((size, size))
    idx = np.arange(size)
    generator[idx[1:] - 1, idx[1:]] += down[1:]
    generator[idx[:-1] + 1, idx[:-1]] += up[:-1]
    generator[idx, idx] -= down + up
    return generator


def rsb_pulse(dist: ArrayLike, reference_n: Optional[int] = None) -> np.ndarray:
    """
    One red-sideband pi pulse followed by an ideal repump.

    With ``reference_n`` the pulse is timed for that Fock level and level n
    transfers with probability sin^2(pi sqrt(n / reference_n) / 2).
    """
    dist = np.asarray(dist, dtype=float)
    n = np.arange(dist.size)
    if reference_n is None:
        moved = np.where(n >= 1, 1.0, 0.0)
    else:
        moved = np.sin(math.pi * np.sqrt(n / reference_n) / 2.0) ** 2
    out = dist * (1.0 - moved)
    out[:-1] += (dist * moved)[1:]
    return out


def _mean(dist: np.ndarray) -> float:
    return float(np.dot(np.arange(dist.size), dist))


def sideband_cool(
    initial: ThermalState,
    protocol: Optional[CoolingProtocol] = None,
) -> CoolingResult:
    """
    Quench-assisted continuous sideband cooling followed by RSB pi pulses.

    Args:
        initial: Thermal state before cooling.
        protocol: Stage durations, rates and pulse count.

    Returns:
        CoolingResult with the final distribution and the mean occupation
        after each stage (initial, continuous, each pulse).
    """
    protocol = protocol or CoolingProtocol()
    dist = thermal_distribution(initial)
    stages: List[float] = [_mean(dist)]

    if protocol.continuous_duration > 0:
        generator = _continuous_generator(protocol, dist.size)
        dist = expm(generator * protocol.continuous_duration) @ dist
        dist = np.clip(dist, 0.0, None)
        dist /= dist.sum()
    stages.append(_mean(dist))
    logger.debug("Continuous cooling: nbar %.4g -> %.4g", stages[0], stages[1])

    for _ in range(protocol.pulsed_transfers):
        dist = rsb_pulse(dist, protocol.pulse_reference_n)
        stages.append(_mean(dist))
    return CoolingResult(distribution=dist, stage_nbar=stages)


def heating_scan(
    nbar0: float,
    rate: float,
    delays: ArrayLike,
    probe: Tuple[SidebandDrive, SidebandDrive],
    carrier_offset: float = 0.0,
    tail_mass: float = TAIL_LIMIT,
) -> Tuple[SignalCurve, SignalCurve]:
    """
    Red and blue sideband excitation after a variable heating delay.

    Args:
        nbar0: Occupation after cooling.
        rate: Heating rate (quanta/s).
        delays: Ascending delays (s).
        probe: (red, blue) sideband pulses.
        carrier_offset: Constant off-resonant carrier excitation.

    Returns:
        (RSB, BSB) curves versus delay.
    """
    if rate < 0:
        raise ValueError("heating rate must be non-negative")
    t = _grid(delays, "delay grid")
    if np.any(np.diff(t) < 0):
        raise InvalidGrid("delays must be sorted")
    red_drive, blue_drive = probe
    if red_drive.order != -1 or blue_drive.order != 1:
        raise ValueError("probe must be a (red, blue) sideband pair")

    red, blue = np.empty(t.size), np.empty(t.size)
    for i, nbar in enumerate(heating_nbar(nbar0, rate, t)):
        state = ThermalState.from_nbar(float(nbar), tail_mass)
        red[i] = sideband_excitation(state, red_drive, red_drive.duration)
        blue[i] = sideband_excitation(state, blue_drive, blue_drive.duration)
    return (
        SignalCurve(x=t, y=np.clip(red + carrier_offset, 0, 1), kind="probability", x_unit="s"),
        SignalCurve(x=t, y=np.clip(blue + carrier_offset, 0, 1), kind="probability", x_unit="s"),
    )


def qubit_rabi_signal(
    rabi_freq: float,
    detuning: float,
    t_grid: ArrayLike,
    decay_time: float,
) -> SignalCurve:
    """
    Zeeman-qubit Rabi flopping with a decaying contrast.

    P(t) = (f^2 / W^2) [1/2 - 1/2 exp(-t/tau) cos(2 pi W t)], W = sqrt(f^2 + d^2),
    frequencies in Hz.
    """
    if decay_time <= 0:
        raise ValueError("decay_time must be positive")
    t = _grid(t_grid, "time grid")
    general = math.hypot(rabi_freq, detuning)
    weight = 0.0 if general == 0 else rabi_freq**2 / general**2
    y = weight * (0.5 - 0.5 * np.exp(-t / decay_time) * np.cos(TWO_PI * general * t))
    return SignalCurve(x=t, y=np.clip(y, 0.0, 1.0), kind="probability", x_unit="s")


# Magnetic noise


def _rng(seed: int, stream: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, stream]))


def _harmonic_phases(noise: MagneticNoiseModel, rng: np.random.Generator, count: int) -> np.ndarray:
    phases = np.empty((count, len(noise.line_harmonics)))
    for j, harmonic in enumerate(noise.line_harmonics):
        if harmonic.phase_policy == PhasePolicy.FIXED:
            phases[:, j] = harmonic.phase
        else:
            phases[:, j] = rng.uniform(0.0, TWO_PI, count)
    return phases


def _ou_samples(
    amplitude: float, bandwidth: float, times: np.ndarray, rng: np.random.Generator
) -> np.ndarray:
    """Stationary Ornstein-Uhlenbeck process sampled exactly at ``times``."""
    out = np.zeros(times.size)
    if amplitude == 0.0 or times.size == 0:
        return out
    tau = 1.0 / (TWO_PI * bandwidth)
    out[0] = amplitude * rng.standard_normal()
    for i in range(1, times.size):
        decay = math.exp(-(times[i] - times[i - 1]) / tau)
        out[i] = out[i - 1] * decay + amplitude * math.sqrt(1.0 - decay**2) * rng.standard_normal()
    return out


def noise_trajectory(noise: MagneticNoiseModel, duration: float, dt: float) -> np.ndarray:
    """
    Sampled field deviation B(t) in G at t = 0, dt, ..., <= duration.

    Deterministic for a given seed; harmonics, slow drift and white noise
    draw from independent streams.
    """
    if dt <= 0 or duration < dt:
        raise ValueError("need dt > 0 and duration >= dt")
    times = np.arange(int(math.floor(duration / dt + 1e-9)) + 1) * dt
    field = np.zeros(times.size)

    if noise.line_harmonics:
        phases = _harmonic_phases(noise, _rng(noise.seed, 1), 1)[0]
        for harmonic, phase in zip(noise.line_harmonics, phases):
            field += harmonic.amplitude * np.sin(TWO_PI * harmonic.frequency * times + phase)
    field += _ou_samples(
        noise.slow_drift_amplitude, noise.slow_drift_bandwidth, times, _rng(noise.seed, 2)
    )
    if noise.white_noise_density > 0:
        # sample mean over dt has variance S^2 / dt
        sigma = noise.white_noise_density / math.sqrt(dt)
        field += sigma * _rng(noise.seed, 3).standard_normal(times.size)
    return field


def ramsey_signal(
    noise: MagneticNoiseModel,
    detuning: float,
    t_grid: ArrayLike,
    shots_per_point: int,
    shot_period: float = 10e-3,
    gyromagnetic: Optional[float] = None,
) -> SignalCurve:
    """
    Monte Carlo Ramsey fringes under magnetic field noise.

    Shot k starts at lab time k * shot_period. Its phase is
    2 pi detuning T + 2 pi gamma_B int_0^T B dt, with the harmonics
    integrated in closed form, the slow drift frozen over one shot and white
    noise contributing a Gaussian phase of variance (2 pi gamma_B)^2 S^2 T.
    Each shot is a Bernoulli draw from cos^2(phase / 2).

    Args:
        noise: Field noise model (seed included).
        detuning: Laser detuning from the qubit (Hz).
        t_grid: Ramsey delays (s).
        shots_per_point: Projective measurements per delay.
        shot_period: Lab time between shots (s).
        gyromagnetic: Qubit field sensitivity (Hz/G); constants file by default.

    Returns:
        SignalCurve of excitation probability with binomial standard errors.
    """
    if shots_per_point < 1:
        raise ValueError("shots_per_point must be at least 1")
    t = _grid(t_grid, "delay grid")
    if gyromagnetic is None:
        gyromagnetic = get_constants().gyromagnetic_slope_MHz_per_G * 1e6
    scale = TWO_PI * gyromagnetic

    total = t.size * shots_per_point
    lab_times = np.arange(total) * shot_period
    delays = np.repeat(t, shots_per_point)

    phase = TWO_PI * detuning * delays
    if noise.line_harmonics:
        phases = _harmonic_phases(noise, _rng(noise.seed, 1), total)
        for j, harmonic in enumerate(noise.line_harmonics):
            w = TWO_PI * harmonic.frequency
            start = w * lab_times + phases[:, j]
            integral = harmonic.amplitude / w * (np.cos(start) - np.cos(start + w * delays))
            phase += scale * integral
    drift = _ou_samples(
        noise.slow_drift_amplitude, noise.slow_drift_bandwidth, lab_times, _rng(noise.seed, 2)
    )
    phase += scale * drift * delays
    if noise.white_noise_density > 0:
        sigma = scale * noise.white_noise_density * np.sqrt(delays)
        phase += sigma * _rng(noise.seed, 3).standard_normal(total)

    probability = np.cos(phase / 2.0) ** 2
    outcomes = _rng(noise.seed, 4).random(total) < probability
    mean = outcomes.reshape(t.size, shots_per_point).mean(axis=1)
    std_err = np.sqrt(mean * (1.0 - mean) / shots_per_point)
    return SignalCurve(x=t, y=mean, y_err=std_err, kind="probability", x_unit="s")


def ramsey_envelope(
    noise: MagneticNoiseModel, t: ArrayLike, gyromagnetic: Optional[float] = None
) -> np.ndarray:
    """Fringe contrast exp(-T/T2) from the white-noise density alone."""
    if gyromagnetic is None:
        gyromagnetic = get_constants().gyromagnetic_slope_MHz_per_G * 1e6
    scale = TWO_PI * gyromagnetic
    return np.exp(-0.5 * (scale * noise.white_noise_density) ** 2 * np.asarray(t, dtype=float))


def white_noise_for_t2(t2: float, gyromagnetic: Optional[float] = None) -> float:
    """White field-noise density (G/sqrt(Hz)) giving a Ramsey T2."""
    if gyromagnetic is None:
        gyromagnetic = get_constants().gyromagnetic_slope_MHz_per_G * 1e6
    return math.sqrt(2.0 / t2) / (TWO_PI * gyromagnetic)


