"""
Pydantic v2 domain models for the ion-trap simulator.

Model overview:
- TrapConfig / SecularFrequencies / MathieuParams / DuffingResponse: trap electrostatics and
  the nonlinear axial response.
- MicromotionProbe: parameters of the micromotion-compensation fluorescence scan.
- Level / DecayChannel / LevelScheme / LaserField / BlochResult / DetectionModel: the
  Zeeman-resolved level structure, light fields and photon-counting readout.
- ThermalState / SidebandDrive / CoolingProtocol / CoolingResult: motional state and 674 nm
  pulses.
- LineHarmonic / MagneticNoiseModel: ambient magnetic field noise for the Zeeman qubit.
- SignalCurve: the (x, y, y_err) series every simulation returns and every fit consumes.
- FitProblem / FitOptions / FitResult: least-squares problems and their outcome.

All quantities are SI with angular frequencies unless the field description says otherwise.
"""

from __future__ import annotations

import math
from typing import Annotated, Any, Callable, List, Literal, Optional, Sequence, Tuple

import numpy as np
from pydantic import (
    BaseModel,
    BeforeValidator,
    ConfigDict,
    Field,
    NonNegativeFloat,
    PositiveFloat,
    field_validator,
    model_validator,
)

from ..utils.constants import (
    ELEMENTARY_CHARGE,
    REFERENCE_ALPHA_HZ,
    TWO_PI,
    PhasePolicy,
    get_constants,
)


def _float_array(value: Any) -> np.ndarray:
    return np.asarray(value, dtype=float)


def _optional_float_array(value: Any) -> Optional[np.ndarray]:
    return None if value is None else np.asarray(value, dtype=float)


def _complex_array(value: Any) -> np.ndarray:
    return np.asarray(value, dtype=complex)


# Common constrained aliases
FloatArray = Annotated[np.ndarray, BeforeValidator(_float_array)]
OptionalFloatArray = Annotated[Optional[np.ndarray], BeforeValidator(_optional_float_array)]
ComplexArray = Annotated[np.ndarray, BeforeValidator(_complex_array)]
Probability = Annotated[float, Field(ge=0.0, le=1.0)]

# Named polarizations in the quantization frame (z along B).
_SQRT_HALF = 1.0 / math.sqrt(2.0)
POLARIZATIONS = {
    "pi": (0.0, 0.0, 1.0),
    "sigma+": (-_SQRT_HALF, -1j * _SQRT_HALF, 0.0),
    "sigma-": (_SQRT_HALF, -1j * _SQRT_HALF, 0.0),
    "x": (1.0, 0.0, 0.0),
    "y": (0.0, 1.0, 0.0),
}


def _polarization(value: Any) -> np.ndarray:
    if isinstance(value, str):
        key = value.strip().lower()
        if key not in POLARIZATIONS:
            raise ValueError(
                f"Unknown polarization '{value}'. Available: {', '.join(POLARIZATIONS)}"
            )
        value = POLARIZATIONS[key]
    return np.asarray(value, dtype=complex)


PolarizationVector = Annotated[np.ndarray, BeforeValidator(_polarization)]


class _ArrayModel(BaseModel):
    """Base for models holding numpy arrays."""

    model_config = ConfigDict(arbitrary_types_allowed=True)


# Trap


def _default_mass() -> float:
    return get_constants().ion_mass


class TrapConfig(BaseModel):
    """Electrode voltages, rf drive, geometry and calibration factors."""

    model_config = ConfigDict(frozen=True)

    rf_amplitude: NonNegativeFloat = Field(default=200.0, description="rf amplitude V_rf (V)")
    rf_frequency: PositiveFloat = Field(
        default=TWO_PI * 21e6, description="rf drive Omega_rf (rad/s)"
    )
    endcap_voltage: NonNegativeFloat = Field(default=50.0, description="End-cap voltage (V)")
    radial_bias: float = Field(default=0.5, description="Radial bias voltage (V)")
    ion_electrode_distance: PositiveFloat = Field(default=0.27e-3, description="r0 (m)")
    ion_endcap_distance: PositiveFloat = Field(default=0.65e-3, description="z0 (m)")
    kappa_radial: NonNegativeFloat = Field(default=0.984, description="rf geometric efficiency")
    kappa_axial: NonNegativeFloat = Field(default=0.152, description="End-cap geometric efficiency")
    kappa_bias: float = Field(
        default=0.954, description="Radial bias splitting efficiency (signed)"
    )
    cubic_coefficient_alpha: float = Field(
        default=TWO_PI**2 * REFERENCE_ALPHA_HZ,
        description="Axial cubic force coefficient alpha (kg (rad/s)^2/m^2)",
    )
    ion_mass: PositiveFloat = Field(default_factory=_default_mass, description="Ion mass (kg)")
    ion_charge: PositiveFloat = Field(default=ELEMENTARY_CHARGE, description="Ion charge (C)")


class SecularFrequencies(BaseModel):
    """Secular angular frequencies (rad/s)."""

    model_config = ConfigDict(frozen=True)

    omega_ax: PositiveFloat
    omega_rad1: PositiveFloat
    omega_rad2: PositiveFloat

    def as_tuple(self) -> Tuple[float, float, float]:
        return (self.omega_ax, self.omega_rad1, self.omega_rad2)


class MathieuParams(BaseModel):
    """Mathieu a and q per axis, ordered (x, y, z) with z the trap axis."""

    model_config = ConfigDict(frozen=True)

    a: Tuple[float, float, float]
    q: Tuple[float, float, float]

    @property
    def q_radial(self) -> float:
        return abs(self.q[0])


class DuffingResponse(_ArrayModel):
    """Steady-state amplitudes of the driven anharmonic axial mode."""

    drive_frequency_grid: FloatArray
    amplitude_up: FloatArray
    amplitude_down: FloatArray
    bistable: bool

    @model_validator(mode="after")
    def check_branches(self) -> "DuffingResponse":
        n = len(self.drive_frequency_grid)
        if len(self.amplitude_up) != n or len(self.amplitude_down) != n:
            raise ValueError("branch arrays must match the frequency grid")
        if np.any(self.amplitude_up < 0) or np.any(self.amplitude_down < 0):
            raise ValueError("amplitudes must be non-negative")
        return self

    @property
    def hysteresis_mask(self) -> np.ndarray:
        """Grid points where the two sweep directions disagree."""
        scale = max(float(np.max(self.amplitude_up, initial=0.0)), 1e-300)
        return np.abs(self.amplitude_up - self.amplitude_down) > 1e-9 * scale


# Detection and level structure


class DetectionModel(BaseModel):
    """Photon-counting readout of a single ion."""

    model_config = ConfigDict(frozen=True)

    bright_rate: NonNegativeFloat = Field(default=70e3, description="Bright count rate (1/s)")
    dark_rate: NonNegativeFloat = Field(default=1e3, description="Background count rate (1/s)")
    detection_time: PositiveFloat = Field(default=1e-3, description="Detection window (s)")
    shelved_lifetime: Optional[PositiveFloat] = Field(
        default=None, description="Shelved-state lifetime (s); None means no decay"
    )
    detection_efficiency: Optional[float] = Field(
        default=None,
        gt=0.0,
        le=1.0,
        description="Photons counted per photon scattered; None scales spectra to bright_rate",
    )


class MicromotionProbe(BaseModel):
    """Fluorescence probe and injected-drive parameters for the compensation scan."""

    model_config = ConfigDict(frozen=True)

    mixing_coefficient: NonNegativeFloat = Field(
        default=2e-17, description="Resonant force per volt of compensation error (N/V)"
    )
    frequency_slope: float = Field(
        default=10e3, description="Axial frequency shift per compensation volt (Hz/V)"
    )
    damping: PositiveFloat = Field(
        default=TWO_PI * 10e3, description="Laser-cooling damping rate gamma (1/s)"
    )
    detuning: float = Field(default=-5.0, description="Cooling laser detuning (MHz)")
    saturation: NonNegativeFloat = Field(default=0.6, description="Cooling laser I/I_sat")
    linewidth: PositiveFloat = Field(default=21.5, description="Transition linewidth (MHz)")
    wavelength: PositiveFloat = Field(default=421.671e-9, description="Cooling wavelength (m)")
    projection: float = Field(
        default=math.cos(math.pi / 4), ge=0.0, le=1.0, description="cos(beam, trap axis)"
    )
    detection: DetectionModel = Field(default_factory=DetectionModel)


class Level(BaseModel):
    """Fine-structure level with its Zeeman sublevels."""

    model_config = ConfigDict(frozen=True)

    label: str = Field(..., min_length=1)
    j: PositiveFloat
    g_factor: float

    @field_validator("j")
    @classmethod
    def validate_half_integer(cls, v: float) -> float:
        if abs(2 * v - round(2 * v)) > 1e-12:
            raise ValueError("J must be integer or half-integer")
        return v

    @property
    def sublevels(self) -> List[float]:
        """Magnetic quantum numbers -J..J."""
        count = int(round(2 * self.j)) + 1
        return [-self.j + k for k in range(count)]


class DecayChannel(BaseModel):
    """Spontaneous decay upper -> lower; ``rate`` is the upper level's total rate."""

    model_config = ConfigDict(frozen=True)

    upper: str
    lower: str
    rate: NonNegativeFloat = Field(..., description="Total decay rate of the upper level (1/s)")
    branching: Probability
    rank: Literal[1, 2] = Field(default=1, description="Multipole rank of the transition")

    @property
    def partial_rate(self) -> float:
        return self.rate * self.branching


class LevelScheme(BaseModel):
    """Levels, decay channels and the magnetic field defining the quantization axis."""

    model_config = ConfigDict(frozen=True)

    levels: List[Level]
    decay_channels: List[DecayChannel]
    magnetic_field: float = Field(default=0.0, description="Magnetic field (G)")

    @model_validator(mode="after")
    def check_channels(self) -> "LevelScheme":
        labels = [level.label for level in self.levels]
        if len(set(labels)) != len(labels):
            raise ValueError("level labels must be unique")
        totals: dict[str, float] = {}
        rates: dict[str, float] = {}
        for channel in self.decay_channels:
            for label in (channel.upper, channel.lower):
                if label not in labels:
                    raise ValueError(f"decay channel references unknown level '{label}'")
            totals[channel.upper] = totals.get(channel.upper, 0.0) + channel.branching
            previous = rates.setdefault(channel.upper, channel.rate)
            if abs(previous - channel.rate) > 1e-12 * max(previous, 1.0):
                raise ValueError(f"channels out of '{channel.upper}' disagree on its rate")
        for upper, total in totals.items():
            if abs(total - 1.0) > 1e-12:
                raise ValueError(f"branching out of '{upper}' sums to {total}, not 1")
        return self

    def level(self, label: str) -> Level:
        for level in self.levels:
            if level.label == label:
                return level
        raise KeyError(label)

    @property
    def states(self) -> List[Tuple[str, float]]:
        """(label, m) for every sublevel, in basis order."""
        return [(level.label, m) for level in self.levels for m in level.sublevels]

    @property
    def dimension(self) -> int:
        return len(self.states)

    def indices(self, label: str) -> List[int]:
        """Basis indices of the sublevels of one level."""
        return [i for i, (name, _) in enumerate(self.states) if name == label]

    def channel(self, lower: str, upper: str) -> Optional[DecayChannel]:
        for channel in self.decay_channels:
            if channel.lower == lower and channel.upper == upper:
                return channel
        return None

    def total_decay_rate(self, label: str) -> float:
        for channel in self.decay_channels:
            if channel.upper == label:
                return channel.rate
        return 0.0


class LaserField(_ArrayModel):
    """Classical light field driving one transition."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    transition: Tuple[str, str] = Field(..., description="(lower, upper) level labels")
    detuning: float = Field(default=0.0, description="Detuning from the B = 0 line (MHz)")
    saturation: NonNegativeFloat = Field(default=0.0, description="I/I_sat")
    polarization: PolarizationVector = Field(default="pi", validate_default=True)
    linewidth: NonNegativeFloat = Field(default=0.0, description="Laser linewidth (MHz)")

    @field_validator("polarization")
    @classmethod
    def validate_polarization(cls, v: np.ndarray) -> np.ndarray:
        if v.shape != (3,):
            raise ValueError("polarization must be a 3-vector")
        norm = float(np.linalg.norm(v))
        if abs(norm - 1.0) > 1e-9:
            raise ValueError(f"polarization must be normalized (|e| = {norm:.6g})")
        return v

    def spherical_components(self) -> dict[int, complex]:
        """Components along e_q (q = -1, 0, +1), e_{+-1} = -+(x +- iy)/sqrt(2)."""
        ex, ey, ez = self.polarization
        return {
            1: complex(-(ex - 1j * ey) * _SQRT_HALF),
            0: complex(ez),
            -1: complex((ex + 1j * ey) * _SQRT_HALF),
        }


class BlochResult(_ArrayModel):
    """Stationary state of the optical Bloch equations."""

    populations: FloatArray
    coherences: ComplexArray = Field(..., description="Full density matrix")
    scattering_rate: NonNegativeFloat = Field(..., description="Photons scattered per second")
    residual: NonNegativeFloat = Field(default=0.0, description="|L rho| / |L|")

    @model_validator(mode="after")
    def check_shapes(self) -> "BlochResult":
        n = len(self.populations)
        if self.coherences.shape != (n, n):
            raise ValueError("density matrix must be square and match the populations")
        return self

    @property
    def density_matrix(self) -> np.ndarray:
        return self.coherences


# Motion and qubit


def thermal_cutoff(nbar: float, tail_mass: float = 1e-6) -> int:
    """Smallest n_max whose thermal tail mass lies below ``tail_mass``."""
    if nbar <= 0:
        return 0
    ratio = nbar / (nbar + 1.0)
    # tail mass is ratio**(n_max + 1)
    return max(0, int(math.ceil(math.log(tail_mass) / math.log(ratio))))


class ThermalState(BaseModel):
    """Thermal occupation of one motional mode, truncated at n_max."""

    model_config = ConfigDict(frozen=True)

    nbar: NonNegativeFloat
    n_max: int = Field(..., ge=0)

    @classmethod
    def from_nbar(cls, nbar: float, tail_mass: float = 1e-6) -> "ThermalState":
        """Thermal state with the smallest truncation meeting ``tail_mass``."""
        return cls(nbar=nbar, n_max=thermal_cutoff(nbar, tail_mass))

    @property
    def tail_mass(self) -> float:
        if self.nbar == 0:
            return 0.0
        return (self.nbar / (self.nbar + 1.0)) ** (self.n_max + 1)


class SidebandDrive(BaseModel):
    """674 nm pulse on the carrier (order 0) or a motional sideband."""

    model_config = ConfigDict(frozen=True)

    eta: NonNegativeFloat = Field(default=0.05, description="Lamb-Dicke parameter")
    omega0: NonNegativeFloat = Field(
        default=TWO_PI * 180e3, description="Carrier Rabi angular frequency (rad/s)"
    )
    order: Literal[-1, 0, 1] = 0
    duration: NonNegativeFloat = Field(default=15e-6, description="Pulse length (s)")
    detuning: float = Field(default=0.0, description="Detuning from the line (rad/s)")


class CoolingProtocol(BaseModel):
    """Continuous quench-assisted sideband cooling followed by discrete RSB pulses."""

    model_config = ConfigDict(frozen=True)

    continuous_duration: NonNegativeFloat = Field(default=2e-3, description="(s)")
    quench_rate: PositiveFloat = Field(
        default=TWO_PI * 20e3, description="Quench-broadened effective linewidth (1/s)"
    )
    pulsed_transfers: int = Field(default=2, ge=0)
    eta: NonNegativeFloat = 0.05
    cooling_rabi: NonNegativeFloat = Field(
        default=TWO_PI * 100e3, description="Carrier Rabi angular frequency while cooling"
    )
    omega_ax: PositiveFloat = Field(default=TWO_PI * 1e6, description="Axial frequency (rad/s)")
    recoil_factor: NonNegativeFloat = Field(
        default=0.4, description="Angular factor of the spontaneous-emission recoil"
    )
    heating_enabled: bool = True
    pulse_reference_n: Optional[int] = Field(
        default=None,
        ge=1,
        description="Fock level the RSB pi pulse is timed for; None transfers every n",
    )


class CoolingResult(_ArrayModel):
    """Final occupation and the mean occupation after each stage."""

    distribution: FloatArray
    stage_nbar: List[float]

    @property
    def nbar(self) -> float:
        n = np.arange(len(self.distribution))
        return float(np.dot(n, self.distribution))


class LineHarmonic(BaseModel):
    """One component of the mains-frequency field ripple."""

    model_config = ConfigDict(frozen=True)

    frequency: PositiveFloat = Field(..., description="(Hz)")
    amplitude: NonNegativeFloat = Field(..., description="(G)")
    phase_policy: PhasePolicy = PhasePolicy.RANDOM
    phase: float = Field(default=0.0, description="Phase used by the fixed policy (rad)")


class MagneticNoiseModel(BaseModel):
    """Ambient field noise seen by the Zeeman qubit."""

    model_config = ConfigDict(frozen=True)

    line_harmonics: List[LineHarmonic] = Field(default_factory=list)
    slow_drift_amplitude: NonNegativeFloat = Field(default=0.0, description="RMS drift (G)")
    slow_drift_bandwidth: PositiveFloat = Field(default=0.1, description="Drift bandwidth (Hz)")
    white_noise_density: NonNegativeFloat = Field(
        default=0.0,
        description="S in G/sqrt(Hz); the field integrated over T has variance S^2 T",
    )
    seed: int = Field(default=0, ge=0)


# Signals


class SignalCurve(_ArrayModel):
    """
    Uniform (x, y, y_err) series.

    When ``x2`` is given the curve is a map: ``y`` has shape (len(x), len(x2)).
    """

    x: FloatArray
    y: FloatArray
    y_err: OptionalFloatArray = None
    x2: OptionalFloatArray = None
    kind: Literal["probability", "counts", "other"] = "other"
    x_unit: str = "1"
    y_unit: str = "1"

    @model_validator(mode="after")
    def check_lengths(self) -> "SignalCurve":
        shape = (len(self.x),) if self.x2 is None else (len(self.x), len(self.x2))
        if self.y.shape != shape:
            raise ValueError(f"y has shape {self.y.shape}, expected {shape}")
        if self.y_err is not None and self.y_err.shape != shape:
            raise ValueError("y_err must match y")
        if self.kind == "probability" and self.y.size:
            if self.y.min() < -1e-12 or self.y.max() > 1 + 1e-12:
                raise ValueError("probabilities must lie in [0, 1]")
        return self

    def __len__(self) -> int:
        return len(self.x)


# Fitting


class FitOptions(BaseModel):
    """Stopping rules for the least-squares engine."""

    model_config = ConfigDict(frozen=True)

    max_iter: int = Field(default=500, ge=1)
    x_tol: PositiveFloat = 1e-10
    f_tol: PositiveFloat = 1e-10
    fallback: bool = Field(default=True, description="Use the simplex fallback when needed")


ModelFunction = Callable[[np.ndarray, np.ndarray], np.ndarray]


class FitProblem(_ArrayModel):
    """A parametric model bound to data."""

    model: ModelFunction
    name: str = "model"
    param_names: List[str]
    params_init: FloatArray
    bounds: List[Tuple[float, float]]
    data: SignalCurve
    weights: OptionalFloatArray = None

    @model_validator(mode="after")
    def check_consistency(self) -> "FitProblem":
        p = len(self.param_names)
        if self.params_init.shape != (p,) or len(self.bounds) != p:
            raise ValueError("params_init, bounds and param_names must have equal length")
        for name, value, (lo, hi) in zip(self.param_names, self.params_init, self.bounds):
            if not lo <= value <= hi:
                raise ValueError(f"initial {name} = {value} outside [{lo}, {hi}]")
        if self.data.x2 is not None:
            raise ValueError("fits take one-dimensional curves")
        if self.weights is not None and self.weights.shape != self.data.y.shape:
            raise ValueError("weights must match the data")
        return self

    def with_init(self, params: Sequence[float]) -> "FitProblem":
        return self.model_copy(update={"params_init": np.asarray(params, dtype=float)})


class FitResult(_ArrayModel):
    """Outcome of a least-squares fit."""

    params: FloatArray
    param_names: List[str]
    residual_norm: NonNegativeFloat
    covariance: FloatArray
    converged: bool
    iterations: int = Field(..., ge=0)
    method: str = "trust-region"
    message: str = ""
    dof: int = Field(default=0, ge=0)

    def as_dict(self) -> dict[str, float]:
        return {name: float(v) for name, v in zip(self.param_names, self.params)}
