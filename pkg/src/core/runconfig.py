"""
Run configuration: the experiment file the CLI reads.

The file is INI-style text. Every key carries its unit in its name
(``endcap_voltage_V = 50``). Sections:

    [run]                 experiment, output_dir, seed, preset
    [trap]                electrodes, rf drive, geometry, calibration targets
    [laser.<name>]        one light field each (transition, detuning, ...)
    [field]               static magnetic field
    [detection]           photon counting
    [micromotion]         injected-drive compensation scan
    [motion]              thermometry and sideband pulses
    [heating]             heating-rate scan
    [cooling]             sideband cooling protocol
    [qubit]               Zeeman qubit drive and Ramsey settings
    [noise]               magnetic field noise
    [scan]                x grid (start, stop, points, unit, spacing)
    [fit], [fit.initial], [fit.bounds], [fit.grid]

A preset is applied first and the file overlays it. Presets live in
``src/presets`` and may name a base preset of their own.
"""

from __future__ import annotations

import configparser
import logging
import re
from pathlib import Path
from typing import Annotated, Any, Dict, List, Literal, Mapping, Optional, Tuple

import numpy as np
from pydantic import (
    BaseModel,
    BeforeValidator,
    ConfigDict,
    Field,
    NonNegativeFloat,
    PositiveFloat,
    ValidationError,
    field_validator,
    model_validator,
)

from ..sim.errors import ConfigError, MissingSection, ParseError, UnknownKey
from ..sim.models import (
    CoolingProtocol,
    DetectionModel,
    LaserField,
    LineHarmonic,
    MagneticNoiseModel,
    MicromotionProbe,
    SecularFrequencies,
    TrapConfig,
)
from ..utils.constants import TWO_PI, Experiment, PhasePolicy
from ..utils.helpers import digest
from ..utils.units import angular, to_si

logger = logging.getLogger(__name__)

PRESET_DIR: Path = Path(__file__).resolve().parent.parent / "presets"
DEFAULT_PRESET = "paper_defaults"
NO_PRESET = "none"

_SECTION_RE = re.compile(r"^\s*\[([^\]]+)\]")
_KEY_RE = re.compile(r"^\s*([^\s=:#;\[][^=:]*?)\s*[=:]")


def _split_floats(value: Any) -> Any:
    if isinstance(value, str):
        return [float(item) for item in value.split(",") if item.strip()]
    return value


def _split_names(value: Any) -> Any:
    if isinstance(value, str):
        return [item.strip() for item in value.split(",") if item.strip()]
    return value


FloatList = Annotated[List[float], BeforeValidator(_split_floats)]
NameList = Annotated[List[str], BeforeValidator(_split_names)]


class _Section(BaseModel):
    """Base for config sections: unknown keys rejected, blank values read as unset."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    @model_validator(mode="before")
    @classmethod
    def blank_to_none(cls, data: Any) -> Any:
        if isinstance(data, Mapping):
            return {
                k: (None if isinstance(v, str) and not v.strip() else v) for k, v in data.items()
            }
        return data


class RunSection(_Section):
    experiment: Optional[Experiment] = None
    output_dir: Optional[Path] = None
    seed: Optional[int] = Field(default=None, ge=0)
    preset: str = DEFAULT_PRESET


class TrapSection(_Section):
    rf_amplitude_V: NonNegativeFloat
    rf_frequency_MHz: PositiveFloat
    endcap_voltage_V: NonNegativeFloat
    radial_bias_V: float
    ion_electrode_distance_mm: PositiveFloat
    ion_endcap_distance_mm: PositiveFloat
    kappa_radial: NonNegativeFloat
    kappa_axial: NonNegativeFloat
    kappa_bias: float
    alpha_kg_Hz2_per_m2: float
    calibrate: bool = False
    target_axial_MHz: Optional[PositiveFloat] = None
    target_radial1_MHz: Optional[PositiveFloat] = None
    target_radial2_MHz: Optional[PositiveFloat] = None

    def trap_config(self) -> TrapConfig:
        """TrapConfig in SI, with the kappas recalibrated when ``calibrate`` is set."""
        from ..sim.trap_model import calibrate_geometry

        cfg = TrapConfig(
            rf_amplitude=self.rf_amplitude_V,
            rf_frequency=angular(self.rf_frequency_MHz, "MHz"),
            endcap_voltage=self.endcap_voltage_V,
            radial_bias=self.radial_bias_V,
            ion_electrode_distance=to_si(self.ion_electrode_distance_mm, "mm"),
            ion_endcap_distance=to_si(self.ion_endcap_distance_mm, "mm"),
            kappa_radial=self.kappa_radial,
            kappa_axial=self.kappa_axial,
            kappa_bias=self.kappa_bias,
            cubic_coefficient_alpha=TWO_PI**2 * self.alpha_kg_Hz2_per_m2,
        )
        if not self.calibrate:
            return cfg
        targets = (self.target_axial_MHz, self.target_radial1_MHz, self.target_radial2_MHz)
        if any(t is None for t in targets):
            raise MissingSection("[trap] calibrate needs target_axial/radial1/radial2_MHz")
        omega = [angular(t, "MHz") for t in targets]
        return calibrate_geometry(
            SecularFrequencies(omega_ax=omega[0], omega_rad1=omega[1], omega_rad2=omega[2]), cfg
        )


class LaserSection(_Section):
    transition: str
    detuning_MHz: float
    saturation: NonNegativeFloat
    polarization: str = "pi"
    linewidth_MHz: NonNegativeFloat = 0.0

    @field_validator("transition")
    @classmethod
    def validate_transition(cls, v: str) -> str:
        lower, sep, upper = v.partition("-")
        if not sep or not lower.strip() or not upper.strip():
            raise ValueError(f"transition must read 'lower-upper', got '{v}'")
        return f"{lower.strip()}-{upper.strip()}"

    def to_field(self) -> LaserField:
        lower, _, upper = self.transition.partition("-")
        return LaserField(
            transition=(lower, upper),
            detuning=self.detuning_MHz,
            saturation=self.saturation,
            polarization=self.polarization,
            linewidth=self.linewidth_MHz,
        )


class FieldSection(_Section):
    magnetic_field_G: NonNegativeFloat


class DetectionSection(_Section):
    bright_rate_kHz: NonNegativeFloat
    dark_rate_kHz: NonNegativeFloat
    detection_time_ms: PositiveFloat
    detection_efficiency: Optional[float] = Field(default=None, gt=0.0, le=1.0)
    shelved_lifetime_ms: Optional[PositiveFloat] = None

    def to_model(self) -> DetectionModel:
        lifetime = self.shelved_lifetime_ms
        return DetectionModel(
            bright_rate=to_si(self.bright_rate_kHz, "kHz"),
            dark_rate=to_si(self.dark_rate_kHz, "kHz"),
            detection_time=to_si(self.detection_time_ms, "ms"),
            shelved_lifetime=None if lifetime is None else to_si(lifetime, "ms"),
            detection_efficiency=self.detection_efficiency,
        )


class MicromotionSection(_Section):
    v_opt_V: float
    mixing_coefficient_N_per_V: NonNegativeFloat
    frequency_slope_kHz_per_V: float
    damping_kHz: PositiveFloat = Field(..., description="Linear-response FWHM")
    detuning_MHz: float
    saturation: NonNegativeFloat
    linewidth_MHz: PositiveFloat
    beam_angle_deg: float = Field(..., ge=0.0, le=90.0)
    v_start_V: float
    v_stop_V: float
    v_points: int = Field(..., ge=1)
    sweep: Literal["up", "down", "both"] = "both"

    def to_probe(self, detection: DetectionModel) -> MicromotionProbe:
        from ..sim.trap_model import damping_for_fwhm

        return MicromotionProbe(
            mixing_coefficient=self.mixing_coefficient_N_per_V,
            frequency_slope=to_si(self.frequency_slope_kHz_per_V, "kHz"),
            damping=damping_for_fwhm(to_si(self.damping_kHz, "kHz")),
            detuning=self.detuning_MHz,
            saturation=self.saturation,
            linewidth=self.linewidth_MHz,
            projection=float(np.cos(np.radians(self.beam_angle_deg))),
            detection=detection,
        )

    def voltages(self) -> np.ndarray:
        return np.linspace(self.v_start_V, self.v_stop_V, self.v_points)


class MotionSection(_Section):
    nbar: NonNegativeFloat
    eta: NonNegativeFloat
    carrier_rabi_kHz: NonNegativeFloat
    pulse_duration_us: NonNegativeFloat
    carrier_offset: float = Field(default=0.0, ge=0.0, le=1.0)
    tail_mass: float = Field(default=1e-6, gt=0.0, lt=1.0)
    exact_laguerre: bool = False


class HeatingSection(_Section):
    nbar0: NonNegativeFloat
    rate_per_ms: NonNegativeFloat
    pulse_duration_us: PositiveFloat
    carrier_rabi_kHz: PositiveFloat
    carrier_offset: float = Field(default=0.0, ge=0.0, le=1.0)


class CoolingSection(_Section):
    continuous_duration_ms: NonNegativeFloat
    quench_rate_kHz: PositiveFloat
    pulsed_transfers: int = Field(..., ge=0)
    cooling_rabi_kHz: NonNegativeFloat
    recoil_factor: NonNegativeFloat = 0.4
    heating_enabled: bool = True
    pulse_reference_n: Optional[int] = Field(default=None, ge=1)

    def to_protocol(self, eta: float, omega_ax: float) -> CoolingProtocol:
        return CoolingProtocol(
            continuous_duration=to_si(self.continuous_duration_ms, "ms"),
            quench_rate=angular(self.quench_rate_kHz, "kHz"),
            pulsed_transfers=self.pulsed_transfers,
            eta=eta,
            cooling_rabi=angular(self.cooling_rabi_kHz, "kHz"),
            omega_ax=omega_ax,
            recoil_factor=self.recoil_factor,
            heating_enabled=self.heating_enabled,
            pulse_reference_n=self.pulse_reference_n,
        )


class QubitSection(_Section):
    rabi_frequency_kHz: NonNegativeFloat
    detuning_kHz: float = 0.0
    decay_time_us: PositiveFloat
    ramsey_detuning_kHz: float = 0.0
    shots_per_point: int = Field(..., ge=1)
    shot_period_ms: PositiveFloat = 10.0


class NoiseSection(_Section):
    white_noise_density_uG_per_rtHz: NonNegativeFloat = 0.0
    slow_drift_amplitude_uG: NonNegativeFloat = 0.0
    slow_drift_bandwidth_Hz: PositiveFloat = 0.1
    line_frequency_Hz: PositiveFloat = 50.0
    harmonic_amplitudes_uG: FloatList = Field(default_factory=list)
    phase_policy: PhasePolicy = PhasePolicy.RANDOM

    def to_model(self, seed: int) -> MagneticNoiseModel:
        harmonics = [
            LineHarmonic(
                frequency=(k + 1) * self.line_frequency_Hz,
                amplitude=to_si(amp, "uG"),
                phase_policy=self.phase_policy,
            )
            for k, amp in enumerate(self.harmonic_amplitudes_uG)
        ]
        return MagneticNoiseModel(
            line_harmonics=harmonics,
            slow_drift_amplitude=to_si(self.slow_drift_amplitude_uG, "uG"),
            slow_drift_bandwidth=self.slow_drift_bandwidth_Hz,
            white_noise_density=to_si(self.white_noise_density_uG_per_rtHz, "uG"),
            seed=seed,
        )


class ScanSection(_Section):
    """x grid; unset fields fall back to the experiment's default scan."""

    start: Optional[float] = None
    stop: Optional[float] = None
    points: Optional[int] = Field(default=None, ge=1)
    unit: Optional[str] = None
    spacing: Literal["linear", "log"] = "linear"

    def grid(self, start: float, stop: float, points: int) -> np.ndarray:
        """Grid in ``unit``; arguments are the defaults for unset fields."""
        lo = start if self.start is None else self.start
        hi = stop if self.stop is None else self.stop
        n = points if self.points is None else self.points
        if self.spacing == "log":
            if lo <= 0 or hi <= 0:
                raise ConfigError("[scan] log spacing needs positive start and stop")
            return np.geomspace(lo, hi, n)
        return np.linspace(lo, hi, n)


class FitSection(_Section):
    model: str
    data: Path
    x_column: str = "x_value"
    y_columns: NameList = Field(default_factory=lambda: ["probability"])
    err_column: Optional[str] = None
    use_errors: bool = True
    grid_init: bool = False
    level: float = Field(default=0.6827, gt=0.0, lt=1.0)
    max_iter: int = Field(default=500, ge=1)
    x_tol: PositiveFloat = 1e-10
    f_tol: PositiveFloat = 1e-10
    initial: Dict[str, float] = Field(default_factory=dict)
    bounds: Dict[str, Annotated[Tuple[float, float], BeforeValidator(_split_floats)]] = Field(
        default_factory=dict
    )
    grid: Dict[str, FloatList] = Field(default_factory=dict)


class RunConfig(BaseModel):
    """A validated run configuration, in the file's units."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    run: RunSection = Field(default_factory=RunSection)
    trap: TrapSection
    lasers: Dict[str, LaserSection]
    field: FieldSection
    detection: DetectionSection
    micromotion: MicromotionSection
    motion: MotionSection
    heating: HeatingSection
    cooling: CoolingSection
    qubit: QubitSection
    noise: NoiseSection
    scan: ScanSection = Field(default_factory=ScanSection)
    fit: Optional[FitSection] = None

    @property
    def experiment(self) -> Experiment:
        if self.run.experiment is None:
            raise MissingSection("[run] experiment is empty")
        return self.run.experiment

    def laser_fields(self) -> List[LaserField]:
        return [section.to_field() for section in self.lasers.values()]


# Sections the parser accepts, and how they map onto RunConfig fields.
_PLAIN_SECTIONS = (
    "run",
    "trap",
    "field",
    "detection",
    "micromotion",
    "motion",
    "heating",
    "cooling",
    "qubit",
    "noise",
    "scan",
    "fit",
)
_FIT_SUBSECTIONS = ("initial", "bounds", "grid")
_LASER_PREFIX = "laser."

# Config fields that change the outputs of each experiment; None keeps the whole section.
RELEVANT_FIELDS: Mapping[Experiment, Mapping[str, Optional[Tuple[str, ...]]]] = {
    Experiment.SPECTRUM: {
        "field": None,
        "lasers": None,
        "detection": (
            "bright_rate_kHz",
            "dark_rate_kHz",
            "detection_time_ms",
            "detection_efficiency",
        ),
        "scan": None,
    },
    Experiment.MICROMOTION: {
        "trap": None,
        "micromotion": None,
        "detection": ("bright_rate_kHz", "dark_rate_kHz", "detection_time_ms"),
        "scan": None,
    },
    Experiment.RABI_THERMAL: {
        "motion": ("nbar", "eta", "carrier_rabi_kHz", "tail_mass", "exact_laguerre"),
        "scan": None,
    },
    Experiment.SIDEBANDS: {
        "trap": None,
        "motion": (
            "nbar",
            "eta",
            "carrier_rabi_kHz",
            "pulse_duration_us",
            "carrier_offset",
            "tail_mass",
        ),
        "scan": None,
    },
    Experiment.COOLING: {
        "trap": None,
        "motion": ("nbar", "eta", "tail_mass"),
        "cooling": None,
    },
    Experiment.HEATING: {"motion": ("eta", "tail_mass"), "heating": None, "scan": None},
    Experiment.QUBIT_RABI: {
        "qubit": ("rabi_frequency_kHz", "detuning_kHz", "decay_time_us"),
        "scan": None,
    },
    Experiment.RAMSEY: {
        "qubit": ("ramsey_detuning_kHz", "shots_per_point", "shot_period_ms"),
        "noise": None,
        "scan": None,
    },
    Experiment.FIT: {
        name: None
        for name in (
            "trap",
            "field",
            "lasers",
            "detection",
            "motion",
            "heating",
            "qubit",
            "fit",
        )
    },
}

_SEEDED = {Experiment.RAMSEY}


def _section_key(loc: Tuple[Any, ...]) -> Tuple[str, Optional[str]]:
    """Config (section, key) for a pydantic error location."""
    parts = [str(p) for p in loc]
    if not parts:
        return "run", None
    if parts[0] == "lasers" and len(parts) >= 2:
        return f"{_LASER_PREFIX}{parts[1]}", parts[2] if len(parts) > 2 else None
    if parts[0] == "fit" and len(parts) >= 2 and parts[1] in _FIT_SUBSECTIONS:
        return f"fit.{parts[1]}", parts[2] if len(parts) > 2 else None
    return parts[0], parts[1] if len(parts) > 1 else None


def _line_map(text: str) -> Dict[Tuple[str, Optional[str]], int]:
    """Line number of every section header and key in ``text``."""
    lines: Dict[Tuple[str, Optional[str]], int] = {}
    section = ""
    for number, line in enumerate(text.splitlines(), start=1):
        if line.lstrip().startswith(("#", ";")):
            continue
        header = _SECTION_RE.match(line)
        if header:
            section = header.group(1).strip()
            lines.setdefault((section, None), number)
            continue
        key = _KEY_RE.match(line)
        if key and section:
            lines.setdefault((section, key.group(1).strip()), number)
    return lines


def _read(text: str, source: str) -> configparser.ConfigParser:
    parser = configparser.ConfigParser(
        inline_comment_prefixes=("#",), interpolation=None, empty_lines_in_values=False
    )
    parser.optionxform = str  # type: ignore[assignment,method-assign]
    try:
        parser.read_string(text, source=source)
    except configparser.MissingSectionHeaderError as e:
        raise ParseError(f"{source}: key outside any [section]", line=e.lineno) from e
    except configparser.ParsingError as e:
        line = e.errors[0][0] if e.errors else None
        raise ParseError(f"{source}: malformed line", line=line) from e
    except (configparser.DuplicateSectionError, configparser.DuplicateOptionError) as e:
        raise ParseError(f"{source}: {e.message}", line=e.lineno) from e
    except configparser.Error as e:
        raise ParseError(f"{source}: {e}") from e
    return parser


def _check_names(parser: configparser.ConfigParser, lines: Mapping, source: str) -> None:
    for section in parser.sections():
        known = (
            section in _PLAIN_SECTIONS
            or section in {f"fit.{s}" for s in _FIT_SUBSECTIONS}
            or (section.startswith(_LASER_PREFIX) and len(section) > len(_LASER_PREFIX))
        )
        if not known:
            line = lines.get((section, None))
            raise UnknownKey(
                f"{source}:{line}: unknown section [{section}]",
                code="unknown_section",
                details={"section": section, "line": line},
            )


def list_presets() -> List[str]:
    """Names of the shipped presets."""
    return sorted(p.stem for p in PRESET_DIR.glob("*.ini"))


def preset_path(name: str) -> Path:
    path = PRESET_DIR / f"{name}.ini"
    if not path.is_file():
        raise ConfigError(
            f"Unknown preset '{name}'. Available: {', '.join(list_presets())}",
            code="unknown_preset",
        )
    return path


def _preset_layers(name: str, seen: Tuple[str, ...] = ()) -> List[configparser.ConfigParser]:
    """Parsers for ``name`` and its base presets, base first."""
    if name.lower() == NO_PRESET:
        return []
    if name in seen:
        raise ConfigError(f"Preset cycle: {' -> '.join(seen + (name,))}")
    path = preset_path(name)
    parser = _read(path.read_text(encoding="utf-8"), source=str(path))
    base = parser.get("run", "preset", fallback=NO_PRESET).strip() or NO_PRESET
    return _preset_layers(base, seen + (name,)) + [parser]


def load_preset(name: str) -> str:
    """Raw text of a shipped preset."""
    return preset_path(name).read_text(encoding="utf-8")


def _merge(layers: List[configparser.ConfigParser]) -> Dict[str, Dict[str, str]]:
    merged: Dict[str, Dict[str, str]] = {}
    for parser in layers:
        for section in parser.sections():
            merged.setdefault(section, {}).update(parser[section])
    return merged


def _structure(merged: Mapping[str, Mapping[str, str]]) -> Dict[str, Any]:
    """Nest flat INI sections into the RunConfig shape."""
    data: Dict[str, Any] = {"lasers": {}}
    for section, values in merged.items():
        if section.startswith(_LASER_PREFIX):
            data["lasers"][section[len(_LASER_PREFIX) :]] = dict(values)
        elif section.startswith("fit."):
            data.setdefault("fit", {})[section[4:]] = dict(values)
        else:
            data.setdefault(section, {}).update(values)
    return data


def _translate(error: ValidationError, lines: Mapping, source: str) -> ConfigError:
    first = error.errors()[0]
    section, key = _section_key(first["loc"])
    line = lines.get((section, key)) or lines.get((section, None))
    where = f"[{section}]" + (f" {key}" if key else "")
    if first["type"] == "missing":
        return MissingSection(
            f"{source}: {where} is required",
            code="missing",
            details={"section": section, "key": key},
        )
    if first["type"] == "extra_forbidden":
        return UnknownKey(
            f"{source}:{line}: unknown key {where}",
            code="unknown_key",
            details={"section": section, "key": key, "line": line},
        )
    return ParseError(f"{source}:{line}: {where}: {first['msg']}", line=line)


def parse_config(
    text: str,
    source: str = "<string>",
    base_dir: Optional[Path] = None,
    experiment: Optional[str] = None,
) -> RunConfig:
    """
    Parse run-configuration text on top of its preset.

    Args:
        text: Config file contents.
        source: Name used in error messages.
        base_dir: Directory that relative fit data paths resolve against.
        experiment: Overrides ``[run] experiment`` (the CLI command name).

    Returns:
        Validated RunConfig.

    Raises:
        ParseError: Malformed text or an invalid value (with line number).
        UnknownKey: Unknown section or key.
        MissingSection: Empty experiment, or a required key no layer provides.
        ConfigError: Unknown preset or a fit data file that does not exist.
    """
    lines = _line_map(text)
    user = _read(text, source)
    _check_names(user, lines, source)

    preset = user.get("run", "preset", fallback=DEFAULT_PRESET).strip() or DEFAULT_PRESET
    data = _structure(_merge(_preset_layers(preset) + [user]))
    data.setdefault("run", {})["preset"] = preset
    if experiment is not None:
        data["run"]["experiment"] = experiment

    try:
        config = RunConfig.model_validate(data)
    except ValidationError as e:
        raise _translate(e, lines, source) from e

    if config.run.experiment is None:
        raise MissingSection(f"{source}: [run] experiment is empty", code="missing")
    if config.experiment == Experiment.FIT and config.fit is None:
        raise MissingSection(f"{source}: the fit experiment needs a [fit] section")
    if config.fit is not None:
        config = _resolve_data(config, base_dir or Path.cwd())
    logger.debug("Parsed %s: experiment=%s preset=%s", source, config.experiment.value, preset)
    return config


def _resolve_data(config: RunConfig, base_dir: Path) -> RunConfig:
    assert config.fit is not None
    path = config.fit.data.expanduser()
    if not path.is_absolute():
        path = (base_dir / path).resolve()
    if not path.is_file():
        raise ConfigError(
            f"[fit] data file not found: {path}", code="data_missing", details={"path": str(path)}
        )
    fit = config.fit.model_copy(update={"data": path})
    return config.model_copy(update={"fit": fit})


def load_config(path: Path, experiment: Optional[str] = None) -> RunConfig:
    """Read and parse a config file; relative paths resolve against its directory."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise ConfigError(f"Cannot read config file {path}: {e}") from e
    return parse_config(
        text, source=str(path), base_dir=path.resolve().parent, experiment=experiment
    )


# Serialization


def _format(value: Any) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, (list, tuple)):
        return ", ".join(_format(v) for v in value)
    if hasattr(value, "value"):
        return str(value.value)
    return str(value)


def _sections(config: RunConfig) -> List[Tuple[str, Dict[str, str]]]:
    """Flat (section name, key -> text) pairs in file order."""
    out: List[Tuple[str, Dict[str, str]]] = []

    def flat(model: BaseModel, exclude: Tuple[str, ...] = ()) -> Dict[str, str]:
        return {
            name: _format(getattr(model, name))
            for name in type(model).model_fields
            if name not in exclude
        }

    out.append(("run", flat(config.run)))
    out.append(("trap", flat(config.trap)))
    for name, laser in config.lasers.items():
        out.append((f"{_LASER_PREFIX}{name}", flat(laser)))
    for section in _PLAIN_SECTIONS[2:-1]:
        out.append((section, flat(getattr(config, section))))
    if config.fit is not None:
        out.append(("fit", flat(config.fit, exclude=_FIT_SUBSECTIONS)))
        for sub in _FIT_SUBSECTIONS:
            values = getattr(config.fit, sub)
            out.append((f"fit.{sub}", {k: _format(v) for k, v in values.items()}))
    return out


def serialize_config(config: RunConfig) -> str:
    """Config text that parses back to an equal RunConfig."""
    chunks = []
    for section, values in _sections(config):
        body = "\n".join(f"{k} = {v}".rstrip() for k, v in values.items())
        chunks.append(f"[{section}]\n{body}".rstrip())
    return "\n\n".join(chunks) + "\n"


def config_hash(config: RunConfig, seed: Optional[int] = None) -> str:
    """
    Digest of the fields that affect ``config.experiment``'s outputs.

    The output directory and preset name are excluded; the seed counts only
    for stochastic experiments; a fit also hashes the data file contents.

    Args:
        config: Parsed run configuration.
        seed: Seed the run actually uses; ``[run] seed`` when omitted.
    """
    experiment = config.experiment
    relevant = RELEVANT_FIELDS[experiment]
    parts = [f"experiment={experiment.value}"]
    if experiment in _SEEDED:
        parts.append(f"seed={config.run.seed if seed is None else seed}")
    for section, values in _sections(config):
        root = section.split(".", 1)[0]
        name = "lasers" if root == "laser" else root
        if name not in relevant:
            continue
        keys = relevant[name]
        parts.append(f"[{section}]")
        parts.extend(
            f"{k}={v}" for k, v in sorted(values.items()) if keys is None or k in keys
        )
    if experiment == Experiment.FIT and config.fit is not None:
        parts.append(f"data={digest(config.fit.data.read_text(encoding='utf-8'))}")
    return digest("\n".join(parts))
