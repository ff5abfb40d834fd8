"""
Eight-level optical Bloch model of the S1/2 - P1/2 - D3/2 system.

Builds the Lindblad generator for Zeeman-resolved sublevels driven by the
422 nm cooling and 1092 nm repump lasers, extracts its stationary state,
and derives fluorescence spectra with dark resonances, optical pumping
fidelity and photon-counting state discrimination.

Superoperators act on column-stacked density matrices:
vec(A rho B) = (B^T kron A) vec(rho).
"""

from __future__ import annotations

import logging
import math
from collections import deque
from functools import lru_cache
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from numpy.typing import ArrayLike
from scipy.linalg import expm, svd
from scipy.optimize import minimize_scalar
from scipy.stats import poisson
from sympy import Rational
from sympy.physics.wigner import clebsch_gordan

from ..utils.constants import MU_B_HZ_PER_G, TWO_PI, AtomicConstants, get_constants
from .errors import (
    DegenerateSteadyState,
    IndistinguishableStates,
    InvalidGrid,
    ModelError,
    UnknownTransition,
)
from .models import (
    POLARIZATIONS,
    BlochResult,
    DecayChannel,
    DetectionModel,
    LaserField,
    Level,
    LevelScheme,
    SignalCurve,
)

logger = logging.getLogger(__name__)

S12 = "S1/2"
P12 = "P1/2"
D32 = "D3/2"

# Singular values below this fraction of the largest count as null
NULL_TOLERANCE = 1e-8


def sr88_level_scheme(
    magnetic_field: float = 0.0, constants: Optional[AtomicConstants] = None
) -> LevelScheme:
    """S1/2, P1/2 and D3/2 of 88Sr+ with their decay channels."""
    c = constants or get_constants()
    gamma_p = c.p12_decay_rate
    branching = c.p12_to_d32_branching
    return LevelScheme(
        levels=[
            Level(label=S12, j=0.5, g_factor=c.g_s12),
            Level(label=P12, j=0.5, g_factor=c.g_p12),
            Level(label=D32, j=1.5, g_factor=c.g_d32),
        ],
        decay_channels=[
            DecayChannel(upper=P12, lower=S12, rate=gamma_p, branching=1.0 - branching),
            DecayChannel(upper=P12, lower=D32, rate=gamma_p, branching=branching),
            DecayChannel(upper=D32, lower=S12, rate=c.d32_decay_rate, branching=1.0, rank=2),
        ],
        magnetic_field=magnetic_field,
    )


def polarization(name: str) -> np.ndarray:
    """Unit polarization vector for pi, sigma+, sigma-, x or y."""
    key = name.strip().lower()
    if key not in POLARIZATIONS:
        raise ValueError(f"Unknown polarization '{name}'. Available: {', '.join(POLARIZATIONS)}")
    return np.asarray(POLARIZATIONS[key], dtype=complex)


def _half(value: float) -> Rational:
    return Rational(int(round(2 * value)), 2)


@lru_cache(maxsize=512)
def _cg(j_low: float, m_low: float, rank: int, q: int, j_up: float, m_up: float) -> float:
    """<J_l m_l; k q | J_u m_u> as a float."""
    return float(
        clebsch_gordan(
            _half(j_low), rank, _half(j_up), _half(m_low), q, _half(m_up)
        ).evalf()
    )


def _transition_operator(
    scheme: LevelScheme, lower: str, upper: str, rank: int, q: int
) -> np.ndarray:
    """Sum over sublevels of CG * |lower, m_l><upper, m_u| with m_u = m_l + q."""
    states = scheme.states
    low, up = scheme.level(lower), scheme.level(upper)
    op = np.zeros((scheme.dimension, scheme.dimension))
    for i, (label_l, m_l) in enumerate(states):
        if label_l != lower:
            continue
        for j, (label_u, m_u) in enumerate(states):
            if label_u != upper or abs(m_u - m_l - q) > 1e-9:
                continue
            op[i, j] = _cg(low.j, m_l, rank, q, up.j, m_u)
    return op


def _resolve_channel(scheme: LevelScheme, field: LaserField) -> DecayChannel:
    lower, upper = field.transition
    channel = scheme.channel(lower, upper) or scheme.channel(upper, lower)
    if channel is None:
        raise UnknownTransition(f"no transition between '{lower}' and '{upper}'")
    if channel.rank != 1:
        raise UnknownTransition(
            f"{channel.lower} - {channel.upper} is not an electric-dipole transition"
        )
    return channel


def frame_coefficients(
    scheme: LevelScheme, fields: Sequence[LaserField]
) -> Dict[str, np.ndarray]:
    """
    Rotating-frame energy of each level as a linear form in the laser detunings.

    Returns per level label a vector c with E_level = sum_k c[k] * detuning_k,
    from the field graph rooted at the first level (upper = lower - detuning).
    """
    channels = [_resolve_channel(scheme, f) for f in fields]
    coeffs: Dict[str, np.ndarray] = {}
    adjacency: Dict[str, List[Tuple[str, int, float]]] = {}
    for k, channel in enumerate(channels):
        adjacency.setdefault(channel.lower, []).append((channel.upper, k, -1.0))
        adjacency.setdefault(channel.upper, []).append((channel.lower, k, 1.0))

    for level in scheme.levels:
        if level.label in coeffs:
            continue
        coeffs[level.label] = np.zeros(len(fields))
        queue = deque([level.label])
        while queue:
            current = queue.popleft()
            for neighbour, k, sign in adjacency.get(current, []):
                candidate = coeffs[current].copy()
                candidate[k] += sign
                if neighbour not in coeffs:
                    coeffs[neighbour] = candidate
                    queue.append(neighbour)
                elif not np.allclose(coeffs[neighbour], candidate):
                    raise ModelError(
                        "laser fields form a loop with no common rotating frame"
                    )
    return coeffs


def bloch_hamiltonian(scheme: LevelScheme, fields: Sequence[LaserField]) -> np.ndarray:
    """Rotating-wave Hamiltonian (rad/s, hbar = 1)."""
    n = scheme.dimension
    coeffs = frame_coefficients(scheme, fields)
    detunings = np.array([TWO_PI * f.detuning * 1e6 for f in fields])
    zeeman = TWO_PI * MU_B_HZ_PER_G * scheme.magnetic_field

    energies = np.empty(n)
    for i, (label, m) in enumerate(scheme.states):
        level = scheme.level(label)
        frame = float(np.dot(coeffs[label], detunings)) if len(fields) else 0.0
        energies[i] = frame + level.g_factor * m * zeeman
    hamiltonian = np.diag(energies).astype(complex)

    for field in fields:
        channel = _resolve_channel(scheme, field)
        rabi = channel.rate * math.sqrt(field.saturation / 2.0) * math.sqrt(3.0)
        for q, amplitude in field.spherical_components().items():
            if abs(amplitude) < 1e-15:
                continue
            # absorption lower -> upper raises m by q
            op = _transition_operator(scheme, channel.lower, channel.upper, 1, q)
            coupling = 0.5 * rabi * amplitude * op.T
            hamiltonian += coupling + coupling.conj().T
    return hamiltonian


def jump_operators(scheme: LevelScheme, fields: Sequence[LaserField] = ()) -> List[np.ndarray]:
    """Collapse operators: spontaneous decay per channel and laser dephasing."""
    ops: List[np.ndarray] = []
    for channel in scheme.decay_channels:
        if channel.partial_rate == 0.0:
            continue
        amplitude = math.sqrt(channel.partial_rate)
        for q in range(-channel.rank, channel.rank + 1):
            op = _transition_operator(scheme, channel.lower, channel.upper, channel.rank, q)
            if np.any(op):
                ops.append(amplitude * op.astype(complex))

    if fields:
        coeffs = frame_coefficients(scheme, fields)
        for k, field in enumerate(fields):
            if field.linewidth == 0.0:
                continue
            diag = np.array([coeffs[label][k] for label, _ in scheme.states])
            ops.append(math.sqrt(TWO_PI * field.linewidth * 1e6) * np.diag(diag).astype(complex))
    return ops


def build_liouvillian(scheme: LevelScheme, fields: Sequence[LaserField]) -> np.ndarray:
    """
    Lindblad generator acting on column-stacked density matrices.

    Args:
        scheme: Levels, decay channels and magnetic field.
        fields: Laser fields, each on a declared dipole transition.

    Returns:
        Complex (n^2, n^2) superoperator.

    Raises:
        UnknownTransition: A field addresses an undeclared or non-dipole pair.
    """
    n = scheme.dimension
    identity = np.eye(n)
    hamiltonian = bloch_hamiltonian(scheme, fields)
    generator = -1j * (np.kron(identity, hamiltonian) - np.kron(hamiltonian.T, identity))
    for op in jump_operators(scheme, fields):
        rate = op.conj().T @ op
        generator += (
            np.kron(op.conj(), op)
            - 0.5 * np.kron(identity, rate)
            - 0.5 * np.kron(rate.T, identity)
        )
    return generator


def _vec_to_matrix(vec: np.ndarray, n: int) -> np.ndarray:
    return np.asarray(vec).reshape((n, n), order="F")


def _result(
    rho: np.ndarray, scheme: LevelScheme, emitter: str, residual: float
) -> BlochResult:
    populations = np.real(np.diag(rho))
    emitter_population = float(populations[scheme.indices(emitter)].sum())
    return BlochResult(
        populations=populations,
        coherences=rho,
        scattering_rate=max(emitter_population, 0.0) * scheme.total_decay_rate(emitter),
        residual=residual,
    )


def steady_state(
    liouvillian: np.ndarray,
    scheme: Optional[LevelScheme] = None,
    emitter: str = P12,
) -> BlochResult:
    """
    Stationary density matrix from the null space of the generator.

    Args:
        liouvillian: Generator from :func:`build_liouvillian`.
        scheme: Level scheme used to build it; the 88Sr+ scheme by default.
        emitter: Level whose decay counts as scattered photons.

    Returns:
        BlochResult with populations, the density matrix and scattering rate.

    Raises:
        DegenerateSteadyState: More than one stationary state.
    """
    scheme = scheme or sr88_level_scheme()
    n = scheme.dimension
    _, sigma, vh = svd(liouvillian)
    null_rows = vh[sigma <= NULL_TOLERANCE * sigma[0]]
    logger.debug(
        "Liouvillian singular values: max=%.3e smallest=%s",
        sigma[0],
        np.array2string(sigma[-3:], precision=3),
    )
    if len(null_rows) > 1:
        raise DegenerateSteadyState(
            f"stationary state is not unique (null dimension {len(null_rows)})",
            null_space=[_vec_to_matrix(row.conj(), n) for row in null_rows],
        )

    vec = vh[-1].conj()
    rho = _vec_to_matrix(vec, n)
    rho = rho / np.trace(rho)
    rho = 0.5 * (rho + rho.conj().T)
    residual = float(np.linalg.norm(liouvillian @ rho.reshape(-1, order="F")) / sigma[0])
    return _result(rho, scheme, emitter, residual)


def evolve(liouvillian: np.ndarray, rho0: np.ndarray, duration: float) -> np.ndarray:
    """Density matrix after ``duration`` seconds under the generator."""
    n = rho0.shape[0]
    vec = expm(liouvillian * duration) @ np.asarray(rho0, dtype=complex).reshape(-1, order="F")
    return _vec_to_matrix(vec, n)


def _field_on(fields: Sequence[LaserField], lower: str, upper: str) -> int:
    for k, field in enumerate(fields):
        if set(field.transition) == {lower, upper}:
            return k
    raise UnknownTransition(f"no laser field on {lower} - {upper}")


def _emitter_free(error: DegenerateSteadyState, scheme: LevelScheme, emitter: str) -> bool:
    """True when no stationary state populates the emitting level."""
    idx = scheme.indices(emitter)
    for basis in error.null_space:
        scale = max(float(np.abs(basis).max()), 1e-300)
        if np.abs(np.diag(basis)[idx]).max() > 1e-9 * scale:
            return False
    return True


def scattering_rate(scheme: LevelScheme, fields: Sequence[LaserField]) -> float:
    """Stationary photon scattering rate; zero when every stationary state is dark."""
    try:
        return steady_state(build_liouvillian(scheme, fields), scheme).scattering_rate
    except DegenerateSteadyState as e:
        if _emitter_free(e, scheme, P12):
            return 0.0
        raise


def fluorescence_spectrum(
    scheme: LevelScheme,
    fields: Sequence[LaserField],
    delta_422_grid: ArrayLike,
    detection: Optional[DetectionModel] = None,
) -> SignalCurve:
    """
    Photon counts per detection window versus 422 nm detuning.

    counts = efficiency * scattering_rate * t + dark_rate * t.

    Without an explicit detection efficiency the scan maximum counts
    ``bright_rate * t``, background included.

    Args:
        scheme: Level scheme including the magnetic field.
        fields: Laser fields; the one on S1/2 - P1/2 is scanned.
        delta_422_grid: 422 nm detunings (MHz).
        detection: Photon-counting parameters.

    Returns:
        SignalCurve of counts versus detuning.
    """
    detection = detection or DetectionModel()
    grid = np.asarray(delta_422_grid, dtype=float)
    if grid.ndim != 1 or grid.size == 0:
        raise InvalidGrid("detuning grid must be a non-empty 1-D array")

    k = _field_on(fields, S12, P12)
    scanned = list(fields)
    rates = np.empty(grid.size)
    for i, delta in enumerate(grid):
        scanned[k] = fields[k].model_copy(update={"detuning": float(delta)})
        rates[i] = scattering_rate(scheme, scanned)

    t = detection.detection_time
    efficiency = detection.detection_efficiency
    if efficiency is None:
        peak = rates.max()
        signal = max(detection.bright_rate - detection.dark_rate, 0.0)
        efficiency = signal / peak if peak > 0 else 0.0
    counts = efficiency * rates * t + detection.dark_rate * t
    logger.debug("Spectrum over %d detunings, peak %.2f counts", grid.size, counts.max())
    return SignalCurve(x=grid, y=counts, kind="counts", x_unit="MHz", y_unit="counts")


def _allowed_steps(
    fields: Optional[Sequence[LaserField]], lower: str, upper: str
) -> set[int]:
    if fields is None:
        return {-1, 0, 1}
    try:
        field = fields[_field_on(fields, lower, upper)]
    except UnknownTransition:
        return set()
    return {q for q, amp in field.spherical_components().items() if abs(amp) > 1e-12}


def dark_resonance_positions(
    scheme: LevelScheme,
    delta_1092: float,
    magnetic_field: float,
    fields: Optional[Sequence[LaserField]] = None,
) -> List[float]:
    """
    422 nm detunings (MHz) of the S1/2 - D3/2 two-photon resonances.

    A pair (m_S, m_D) is listed when both connect to a common P1/2 sublevel;
    with ``fields`` given, only through the polarization components present.
    The position is delta_1092 + (g_D m_D - g_S m_S) mu_B B / h.
    """
    if magnetic_field < 0:
        raise ValueError("magnetic field must be non-negative")
    s, p, d = scheme.level(S12), scheme.level(P12), scheme.level(D32)
    steps_422 = _allowed_steps(fields, S12, P12)
    steps_1092 = _allowed_steps(fields, D32, P12)
    zeeman_mhz = MU_B_HZ_PER_G * magnetic_field / 1e6

    positions = set()
    for m_s in s.sublevels:
        for m_d in d.sublevels:
            for m_p in p.sublevels:
                if round(m_p - m_s) in steps_422 and round(m_p - m_d) in steps_1092:
                    offset = (d.g_factor * m_d - s.g_factor * m_s) * zeeman_mhz
                    positions.add(round(delta_1092 + offset, 9))
                    break
    return sorted(positions)


def pumping_fidelity(
    scheme: LevelScheme,
    sigma_plus_purity: float,
    pulse_duration: float,
    saturation: float = 1.0,
    repump_saturation: float = 1.0,
    repump_detuning: float = 10.0,
    settle_time: float = 0.2e-6,
) -> float:
    """
    Population of S1/2 m = +1/2 after a circularly polarized 422 nm pulse.

    The beam is sqrt(p) sigma+ + sqrt(1 - p) sigma-, resonant, with the
    1092 nm repump on; the atom then decays in the dark for ``settle_time``.

    Args:
        scheme: Level scheme (its magnetic field sets the Zeeman splitting).
        sigma_plus_purity: Fraction p of sigma+ intensity.
        pulse_duration: Pumping pulse length (s).
        saturation: 422 nm I/I_sat.
        repump_saturation: 1092 nm I/I_sat.
        repump_detuning: 1092 nm detuning (MHz).
        settle_time: Dark interval before readout (s).

    Returns:
        Final m = +1/2 population, starting from the unpolarized ground state.
    """
    if not 0.0 <= sigma_plus_purity <= 1.0:
        raise ValueError("purity must lie in [0, 1]")
    if pulse_duration < 0:
        raise ValueError("pulse duration must be non-negative")

    p = sigma_plus_purity
    pump = LaserField(
        transition=(S12, P12),
        saturation=saturation,
        polarization=math.sqrt(p) * polarization("sigma+")
        + math.sqrt(1.0 - p) * polarization("sigma-"),
    )
    repump = LaserField(
        transition=(D32, P12),
        detuning=repump_detuning,
        saturation=repump_saturation,
        polarization="x",
    )
    states = scheme.states
    ground = scheme.indices(S12)
    rho = np.zeros((len(states), len(states)), dtype=complex)
    rho[ground, ground] = 1.0 / len(ground)

    if pulse_duration > 0:
        rho = evolve(build_liouvillian(scheme, [pump, repump]), rho, pulse_duration)
    rho = evolve(build_liouvillian(scheme, []), rho, settle_time)
    target = states.index((S12, 0.5))
    return float(np.clip(np.real(rho[target, target]), 0.0, 1.0))


def mean_scatters_before_shelving(
    scheme: LevelScheme, field: LaserField, tolerance: float = 1e-9
) -> float:
    """
    Expected number of P1/2 decays until the ion lands in D3/2.

    D3/2 is treated as absorbing and only ``field`` is on; starts from the
    unpolarized ground state.
    """
    absorbing = LevelScheme(
        levels=scheme.levels,
        decay_channels=[c for c in scheme.decay_channels if c.upper != D32],
        magnetic_field=scheme.magnetic_field,
    )
    n = absorbing.dimension
    generator = build_liouvillian(absorbing, [field])
    ground = absorbing.indices(S12)
    rho0 = np.zeros((n, n), dtype=complex)
    rho0[ground, ground] = 1.0 / len(ground)
    vec0 = rho0.reshape(-1, order="F")

    # [[L, v], [0, 0]] exponentiates to the time integral in the last column
    size = n * n
    augmented = np.zeros((size + 1, size + 1), dtype=complex)
    augmented[:size, :size] = generator
    augmented[:size, size] = vec0
    shelved = absorbing.indices(D32)
    emitter = absorbing.indices(P12)
    gamma = absorbing.total_decay_rate(P12)

    horizon = 1e-5
    while horizon <= 1.0:
        block = expm(augmented * horizon)
        rho_end = _vec_to_matrix(block[:size, :size] @ vec0, n)
        remaining = 1.0 - float(np.real(np.trace(rho_end[np.ix_(shelved, shelved)])))
        if remaining < tolerance:
            integral = _vec_to_matrix(block[:size, size], n)
            return float(gamma * np.real(np.trace(integral[np.ix_(emitter, emitter)])))
        horizon *= 4.0
    raise ModelError("population does not accumulate in D3/2 under this field")


# Detection


def detection_fidelity(model: DetectionModel) -> Dict[str, float]:
    """
    Threshold discrimination of bright and shelved (dark) ion states.

    Counts above the threshold read bright. The dark state decays to bright
    with probability 1 - exp(-t/tau) within the window, modeled as a
    bright/dark mixture.

    Returns:
        threshold, error_bright, error_dark, fidelity (1 - mean error).

    Raises:
        IndistinguishableStates: bright_rate does not exceed dark_rate.
    """
    if model.bright_rate <= model.dark_rate:
        raise IndistinguishableStates(
            f"bright rate {model.bright_rate} does not exceed dark rate {model.dark_rate}"
        )
    t = model.detection_time
    bright, dark = model.bright_rate * t, model.dark_rate * t
    decay = 0.0 if model.shelved_lifetime is None else -math.expm1(-t / model.shelved_lifetime)

    thresholds = np.arange(0, int(bright + 10.0 * math.sqrt(bright) + 10.0) + 1)
    error_bright = poisson.cdf(thresholds, bright)
    error_dark = (1.0 - decay) * poisson.sf(thresholds, dark) + decay * poisson.sf(
        thresholds, bright
    )
    mean_error = 0.5 * (error_bright + error_dark)
    best = int(np.argmin(mean_error))
    return {
        "threshold": float(thresholds[best]),
        "error_bright": float(error_bright[best]),
        "error_dark": float(error_dark[best]),
        "fidelity": float(1.0 - mean_error[best]),
    }


def optimise_detection_time(
    model: DetectionModel,
    t_min: float = 1e-5,
    t_max: float = 5e-3,
    points: int = 60,
) -> Tuple[float, Dict[str, float]]:
    """
    Detection window minimising the mean discrimination error.

    Coarse log grid followed by a bounded scalar refinement around the best
    grid point.
    """
    if not 0 < t_min < t_max:
        raise ValueError("need 0 < t_min < t_max")

    def error(log_t: float) -> float:
        trial = model.model_copy(update={"detection_time": float(np.exp(log_t))})
        return 1.0 - detection_fidelity(trial)["fidelity"]

    grid = np.linspace(math.log(t_min), math.log(t_max), points)
    errors = np.array([error(g) for g in grid])
    i = int(np.argmin(errors))
    best_log, best_error = grid[i], errors[i]

    lo, hi = grid[max(i - 1, 0)], grid[min(i + 1, points - 1)]
    if hi > lo:
        refined = minimize_scalar(error, bounds=(lo, hi), method="bounded")
        if refined.success and refined.fun < best_error:
            best_log, best_error = float(refined.x), float(refined.fun)

    t_best = float(np.exp(best_log))
    logger.debug("Optimal detection time %.3g s, error %.3g", t_best, best_error)
    return t_best, detection_fidelity(model.model_copy(update={"detection_time": t_best}))
