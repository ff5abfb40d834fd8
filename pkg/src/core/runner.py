"""
Experiment runner.

Turns a RunConfig into output files: ``<name>.csv`` (with a ``# units:``
line), a ``<name>.plot.json`` descriptor next to each table, and a
``manifest.json`` listing everything written.
"""

from __future__ import annotations

import logging
import time
from contextlib import contextmanager
from pathlib import Path
from typing import Any, Callable, Dict, Iterator, List, Mapping, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, Field

from .. import __version__
from ..sim.atom_optics import (
    D32,
    P12,
    dark_resonance_positions,
    fluorescence_spectrum,
    sr88_level_scheme,
)
from ..sim.errors import ConfigError, IonTrapError, MaxIterationsExceeded, SchemaMismatch
from ..sim.fitting import fit, format_report, grid_init
from ..sim.models import FitOptions, FitProblem, SidebandDrive, SignalCurve, ThermalState
from ..sim.motion_qubit import (
    carrier_rabi_signal,
    heating_scan,
    qubit_rabi_signal,
    ramsey_signal,
    sideband_cool,
    sideband_excitation,
    sideband_spectrum,
)
from ..sim.trap_model import micromotion_scan, secular_frequencies
from ..utils.config import Settings, get_settings
from ..utils.constants import TWO_PI, Experiment, SweepDirection
from ..utils.helpers import (
    ensure_directory,
    get_timestamp,
    read_csv_table,
    write_csv,
    write_json_file,
)
from ..utils.units import SCALE, from_si, to_si
from .fit_models import build_fit_model
from .runconfig import RunConfig, config_hash

logger = logging.getLogger(__name__)

MANIFEST_NAME = "manifest.json"


class ScanDefault(BaseModel):
    """Grid an experiment uses when [scan] leaves a field unset."""

    start: float
    stop: float
    points: int
    unit: str


DEFAULT_SCANS: Mapping[Experiment, ScanDefault] = {
    Experiment.SPECTRUM: ScanDefault(start=-60.0, stop=40.0, points=201, unit="MHz"),
    Experiment.MICROMOTION: ScanDefault(start=21.96, stop=22.08, points=121, unit="MHz"),
    Experiment.RABI_THERMAL: ScanDefault(start=0.0, stop=100.0, points=201, unit="us"),
    Experiment.SIDEBANDS: ScanDefault(start=-1300.0, stop=1300.0, points=521, unit="kHz"),
    Experiment.HEATING: ScanDefault(start=0.0, stop=10.0, points=11, unit="ms"),
    Experiment.QUBIT_RABI: ScanDefault(start=0.0, stop=200.0, points=201, unit="us"),
    Experiment.RAMSEY: ScanDefault(start=0.0, stop=5.0, points=101, unit="ms"),
}

# Pulse-time points of the resonant sideband pair written next to the spectrum.
PAIR_POINTS = 51


class RunManifest(BaseModel):
    """Record of one run."""

    experiment: str
    config_hash: str
    tool_version: str
    seed: Optional[int] = None
    created_at: str = Field(default_factory=get_timestamp)
    outputs: List[str] = Field(default_factory=list)
    timings: Dict[str, float] = Field(default_factory=dict)
    summary: Dict[str, Any] = Field(default_factory=dict)


def with_overrides(
    config: RunConfig, output_dir: Optional[Path] = None, seed: Optional[int] = None
) -> RunConfig:
    """Apply command-line overrides to the [run] section."""
    update: Dict[str, Any] = {}
    if output_dir is not None:
        update["output_dir"] = Path(output_dir)
    if seed is not None:
        update["seed"] = seed
    if not update:
        return config
    return config.model_copy(update={"run": config.run.model_copy(update=update)})


class ExperimentRunner:
    """
    Dispatches one experiment and writes its outputs.

    Example:
        >>> runner = ExperimentRunner()
        >>> manifest = runner.run(load_config(Path("run.ini"), "spectrum"))
    """

    def __init__(self, settings: Optional[Settings] = None):
        self.settings = settings or get_settings()
        self._outputs: List[Path] = []
        self._timings: Dict[str, float] = {}
        self._summary: Dict[str, Any] = {}
        self._handlers: Dict[Experiment, Callable[[RunConfig], None]] = {
            Experiment.SPECTRUM: self._spectrum,
            Experiment.MICROMOTION: self._micromotion,
            Experiment.RABI_THERMAL: self._rabi_thermal,
            Experiment.SIDEBANDS: self._sidebands,
            Experiment.COOLING: self._cooling,
            Experiment.HEATING: self._heating,
            Experiment.QUBIT_RABI: self._qubit_rabi,
            Experiment.RAMSEY: self._ramsey,
            Experiment.FIT: self._fit,
        }

    # Helpers

    def output_dir(self, config: RunConfig) -> Path:
        return Path(config.run.output_dir or self.settings.output_dir)

    def seed(self, config: RunConfig) -> int:
        return self.settings.default_seed if config.run.seed is None else config.run.seed

    @contextmanager
    def _stage(self, name: str) -> Iterator[None]:
        start = time.perf_counter()
        try:
            yield
        finally:
            self._timings[name] = round(time.perf_counter() - start, 6)
            logger.debug("Stage %s took %.3fs", name, self._timings[name])

    def _scan(self, config: RunConfig) -> Tuple[np.ndarray, str]:
        """Configured x grid in its display unit, and that unit."""
        default = DEFAULT_SCANS[config.experiment]
        unit = config.scan.unit or default.unit
        if unit not in SCALE:
            raise ConfigError(f"[scan] unknown unit '{unit}'", code="unit")
        start, stop = (from_si(to_si(v, default.unit), unit) for v in (default.start, default.stop))
        grid = config.scan.grid(start, stop, default.points)
        return grid, unit

    def _write(
        self,
        name: str,
        columns: Sequence[str],
        rows: Sequence[Sequence[Any]],
        units: Mapping[str, str],
        plot: Dict[str, Any],
        comments: Optional[Mapping[str, str]] = None,
        out: Optional[Path] = None,
    ) -> None:
        assert out is not None
        csv_path = write_csv(out / f"{name}.csv", columns, rows, units, comments)
        plot_path = out / f"{name}.plot.json"
        write_json_file({"data": csv_path.name, **plot}, plot_path)
        self._outputs.extend([csv_path, plot_path])
        logger.info("Wrote %s (%d rows)", csv_path, len(rows))

    def _write_signal(
        self,
        name: str,
        curve: SignalCurve,
        x_display: np.ndarray,
        x_unit: str,
        x_label: str,
        title: str,
        out: Path,
    ) -> None:
        err = curve.y_err if curve.y_err is not None else np.zeros_like(curve.y)
        rows = [(float(x), float(y), float(e)) for x, y, e in zip(x_display, curve.y, err)]
        self._write(
            name,
            ["x_value", "probability", "std_err"],
            rows,
            {"x_value": x_unit},
            {
                "title": title,
                "kind": "line",
                "x": {"column": "x_value", "label": f"{x_label} ({x_unit})", "log": False},
                "y": {"label": "Excitation probability", "log": False},
                "series": [{"column": "probability", "error": "std_err"}],
            },
            comments={"x": x_label},
            out=out,
        )

    # Run

    def run(self, config: RunConfig) -> RunManifest:
        """
        Run the configured experiment.

        Returns:
            RunManifest; every listed output exists.

        Raises:
            IonTrapError: Any simulator error, with the experiment name in
                ``details["experiment"]``.
        """
        experiment = config.experiment
        out = ensure_directory(self.output_dir(config))
        self._outputs, self._timings, self._summary = [], {}, {}
        logger.info("Running %s into %s", experiment.value, out)

        pending: Optional[MaxIterationsExceeded] = None
        try:
            with self._stage("total"):
                self._handlers[experiment](config)
        except MaxIterationsExceeded as e:
            pending = e
        except IonTrapError as e:
            e.details.setdefault("experiment", experiment.value)
            logger.error("%s failed: %s", experiment.value, e)
            raise

        manifest = RunManifest(
            experiment=experiment.value,
            config_hash=config_hash(config, self.seed(config)),
            tool_version=__version__,
            seed=self.seed(config),
            outputs=[p.name for p in self._outputs],
            timings=self._timings,
            summary=self._summary,
        )
        manifest_path = out / MANIFEST_NAME
        write_json_file(manifest.model_dump(), manifest_path)
        logger.info("Wrote %s", manifest_path)
        if pending is not None:
            pending.details.setdefault("experiment", experiment.value)
            raise pending
        return manifest

    # Experiments

    def _spectrum(self, config: RunConfig) -> None:
        out = self.output_dir(config)
        grid, unit = self._scan(config)
        delta_mhz = from_si(to_si(grid, unit), "MHz")
        fields = config.laser_fields()
        scheme = sr88_level_scheme(config.field.magnetic_field_G)
        detection = config.detection.to_model()

        with self._stage("spectrum"):
            curve = fluorescence_spectrum(scheme, fields, delta_mhz, detection)
        per_ms = curve.y / (detection.detection_time * 1e3)

        repump = [f for f in fields if set(f.transition) == {D32, P12}]
        comments = {}
        if repump:
            positions = dark_resonance_positions(
                scheme, repump[0].detuning, config.field.magnetic_field_G, fields
            )
            comments["dark_resonances_MHz"] = ", ".join(f"{p:.6g}" for p in positions)
            self._summary["dark_resonances_MHz"] = positions
        self._summary["peak_counts_per_ms"] = float(per_ms.max())
        self._summary["background_counts_per_ms"] = detection.dark_rate * 1e-3

        self._write(
            "spectrum",
            ["delta422_MHz", "counts_per_ms"],
            [(float(d), float(c)) for d, c in zip(delta_mhz, per_ms)],
            {"delta422_MHz": "MHz", "counts_per_ms": "1/ms"},
            {
                "title": "S1/2-P1/2 fluorescence",
                "kind": "line",
                "x": {"column": "delta422_MHz", "label": "422 nm detuning (MHz)", "log": False},
                "y": {"label": "Counts per ms", "log": False},
                "series": [{"column": "counts_per_ms"}],
            },
            comments=comments,
            out=out,
        )

    def _micromotion(self, config: RunConfig) -> None:
        out = self.output_dir(config)
        grid, unit = self._scan(config)
        drive_hz = to_si(grid, unit)
        with self._stage("calibration"):
            trap = config.trap.trap_config()
        # injected drive mixes down with the rf to the axial mode
        mixed = TWO_PI * np.asarray(drive_hz) - trap.rf_frequency
        if np.any(np.diff(mixed) <= 0):
            raise ConfigError("[scan] micromotion drive frequencies must be ascending")

        mm = config.micromotion
        probe = mm.to_probe(config.detection.to_model())
        volts = mm.voltages()
        sweeps = [SweepDirection.UP, SweepDirection.DOWN] if mm.sweep == "both" else [
            SweepDirection(mm.sweep)
        ]
        window_ms = probe.detection.detection_time * 1e3

        rows = []
        for sweep in sweeps:
            with self._stage(f"scan_{sweep.value}"):
                curve = micromotion_scan(trap, mm.v_opt_V, volts, mixed, sweep, probe)
            for i, volt in enumerate(volts):
                for j, f in enumerate(drive_hz):
                    counts = float(curve.y[i, j] / window_ms)
                    rows.append((float(volt), float(f) * 1e-6, sweep.value, counts))
            self._summary[f"min_counts_per_ms_{sweep.value}"] = float(curve.y.min() / window_ms)

        self._write(
            "micromotion",
            ["v_comp_V", "drive_freq_MHz", "sweep_dir", "counts_per_ms"],
            rows,
            {"v_comp_V": "V", "drive_freq_MHz": "MHz", "sweep_dir": "1", "counts_per_ms": "1/ms"},
            {
                "title": "Micromotion compensation scan",
                "kind": "heatmap",
                "x": {"column": "v_comp_V", "label": "Compensation voltage (V)", "log": False},
                "y": {"column": "drive_freq_MHz", "label": "Drive frequency (MHz)", "log": False},
                "z": {"column": "counts_per_ms", "label": "Counts per ms"},
                "facet": "sweep_dir",
            },
            out=out,
        )

    def _rabi_thermal(self, config: RunConfig) -> None:
        out = self.output_dir(config)
        grid, unit = self._scan(config)
        motion = config.motion
        state = ThermalState.from_nbar(motion.nbar, motion.tail_mass)
        drive = SidebandDrive(eta=motion.eta, omega0=TWO_PI * motion.carrier_rabi_kHz * 1e3)
        with self._stage("carrier"):
            curve = carrier_rabi_signal(state, drive, to_si(grid, unit), motion.exact_laguerre)
        self._summary["n_max"] = state.n_max
        self._write_signal(
            "rabi_thermal", curve, grid, unit, "pulse_time", "Thermal carrier Rabi flopping", out
        )

    def _sidebands(self, config: RunConfig) -> None:
        out = self.output_dir(config)
        grid, unit = self._scan(config)
        motion = config.motion
        with self._stage("calibration"):
            omega_ax = secular_frequencies(config.trap.trap_config()).omega_ax
        state = ThermalState.from_nbar(motion.nbar, motion.tail_mass)
        drive = SidebandDrive(
            eta=motion.eta,
            omega0=TWO_PI * motion.carrier_rabi_kHz * 1e3,
            duration=motion.pulse_duration_us * 1e-6,
        )
        with self._stage("spectrum"):
            curve = sideband_spectrum(
                state, drive, TWO_PI * to_si(grid, unit), motion.carrier_offset, omega_ax
            )
        self._write_signal(
            "sidebands", curve, grid, unit, "detuning", "Axial sideband spectrum", out
        )

        times = np.linspace(0.0, drive.duration, PAIR_POINTS)
        red = drive.model_copy(update={"order": -1})
        blue = drive.model_copy(update={"order": 1})
        with self._stage("pair"):
            rsb = [sideband_excitation(state, red, float(t)) for t in times]
            bsb = [sideband_excitation(state, blue, float(t)) for t in times]
        if bsb[-1] > 0:
            self._summary["rsb_bsb_ratio"] = rsb[-1] / bsb[-1]
        self._write(
            "sidebands_pair",
            ["x_value", "rsb", "bsb"],
            [(t * 1e6, r, b) for t, r, b in zip(times, rsb, bsb)],
            {"x_value": "us"},
            {
                "title": "Resonant sideband flopping",
                "kind": "line",
                "x": {"column": "x_value", "label": "pulse_time (us)", "log": False},
                "y": {"label": "Excitation probability", "log": False},
                "series": [{"column": "rsb"}, {"column": "bsb"}],
            },
            comments={"x": "pulse_time"},
            out=out,
        )

    def _cooling(self, config: RunConfig) -> None:
        out = self.output_dir(config)
        motion = config.motion
        with self._stage("calibration"):
            omega_ax = secular_frequencies(config.trap.trap_config()).omega_ax
        protocol = config.cooling.to_protocol(motion.eta, omega_ax)
        initial = ThermalState.from_nbar(motion.nbar, motion.tail_mass)
        with self._stage("cooling"):
            result = sideband_cool(initial, protocol)

        names = ["initial", "continuous"] + [
            f"pulse_{k + 1}" for k in range(protocol.pulsed_transfers)
        ]
        self._summary["final_nbar"] = result.nbar
        self._summary["ground_state_population"] = float(result.distribution[0])
        self._write(
            "cooling",
            ["stage_index", "stage", "nbar"],
            [(i, name, nbar) for i, (name, nbar) in enumerate(zip(names, result.stage_nbar))],
            {"nbar": "1"},
            {
                "title": "Mean occupation per cooling stage",
                "kind": "line",
                "x": {"column": "stage_index", "label": "Stage", "log": False},
                "y": {"label": "Mean occupation", "log": True},
                "series": [{"column": "nbar"}],
            },
            out=out,
        )
        self._write(
            "cooling_distribution",
            ["n", "probability"],
            [(n, float(p)) for n, p in enumerate(result.distribution)],
            {"n": "1", "probability": "1"},
            {
                "title": "Fock distribution after cooling",
                "kind": "bar",
                "x": {"column": "n", "label": "Fock level", "log": False},
                "y": {"label": "Probability", "log": True},
                "series": [{"column": "probability"}],
            },
            out=out,
        )

    def _heating(self, config: RunConfig) -> None:
        out = self.output_dir(config)
        grid, unit = self._scan(config)
        heating, motion = config.heating, config.motion
        probe = tuple(
            SidebandDrive(
                eta=motion.eta,
                omega0=TWO_PI * heating.carrier_rabi_kHz * 1e3,
                order=order,
                duration=heating.pulse_duration_us * 1e-6,
            )
            for order in (-1, 1)
        )
        with self._stage("scan"):
            rsb, bsb = heating_scan(
                heating.nbar0,
                heating.rate_per_ms * 1e3,
                to_si(grid, unit),
                probe,  # type: ignore[arg-type]
                heating.carrier_offset,
                motion.tail_mass,
            )
        self._write(
            "heating",
            ["x_value", "rsb", "bsb"],
            [(float(x), float(r), float(b)) for x, r, b in zip(grid, rsb.y, bsb.y)],
            {"x_value": unit},
            {
                "title": "Sideband excitation after a heating delay",
                "kind": "line",
                "x": {"column": "x_value", "label": f"delay ({unit})", "log": False},
                "y": {"label": "Excitation probability", "log": False},
                "series": [{"column": "rsb"}, {"column": "bsb"}],
            },
            comments={"x": "delay"},
            out=out,
        )

    def _qubit_rabi(self, config: RunConfig) -> None:
        out = self.output_dir(config)
        grid, unit = self._scan(config)
        qubit = config.qubit
        with self._stage("rabi"):
            curve = qubit_rabi_signal(
                qubit.rabi_frequency_kHz * 1e3,
                qubit.detuning_kHz * 1e3,
                to_si(grid, unit),
                qubit.decay_time_us * 1e-6,
            )
        self._write_signal(
            "qubit_rabi", curve, grid, unit, "pulse_time", "Zeeman qubit Rabi flopping", out
        )

    def _ramsey(self, config: RunConfig) -> None:
        out = self.output_dir(config)
        grid, unit = self._scan(config)
        qubit = config.qubit
        noise = config.noise.to_model(self.seed(config))
        with self._stage("monte_carlo"):
            curve = ramsey_signal(
                noise,
                qubit.ramsey_detuning_kHz * 1e3,
                to_si(grid, unit),
                qubit.shots_per_point,
                qubit.shot_period_ms * 1e-3,
            )
        self._write_signal("ramsey", curve, grid, unit, "delay", "Ramsey fringes", out)

    # Fitting

    def _load_data(self, config: RunConfig) -> Tuple[SignalCurve, np.ndarray, str]:
        """Stacked SI curve from the fit data file, the raw x column and its unit."""
        spec = config.fit
        assert spec is not None
        columns, comments, rows = read_csv_table(spec.data)
        wanted = [spec.x_column, *spec.y_columns] + ([spec.err_column] if spec.err_column else [])
        missing = [c for c in wanted if c not in columns]
        if missing:
            raise SchemaMismatch(
                f"{spec.data.name}: missing columns {missing}; found {columns}",
                details={"missing": missing, "columns": columns},
            )
        try:
            table = np.array([[float(row[columns.index(c)]) for c in wanted] for row in rows])
        except (ValueError, IndexError) as e:
            raise SchemaMismatch(f"{spec.data.name}: non-numeric or short row ({e})") from e
        if table.size == 0:
            raise SchemaMismatch(f"{spec.data.name}: no data rows")

        units = _units(comments.get("units", ""))
        x_unit = units.get(spec.x_column, "1")
        if x_unit != "1" and x_unit not in SCALE:
            raise SchemaMismatch(f"{spec.data.name}: unknown unit '{x_unit}' for {spec.x_column}")
        x_raw = table[:, 0]
        x_si = np.asarray(to_si(x_raw, x_unit)) if x_unit != "1" else x_raw

        k = len(spec.y_columns)
        y = np.concatenate([table[:, 1 + i] for i in range(k)])
        y_err = None
        if spec.err_column:
            y_err = np.tile(table[:, 1 + k], k)
        curve = SignalCurve(x=np.tile(x_si, k), y=y, y_err=y_err)
        return curve, x_raw, x_unit

    def _fit(self, config: RunConfig) -> None:
        out = self.output_dir(config)
        spec = config.fit
        assert spec is not None
        with self._stage("load"):
            data, x_raw, x_unit = self._load_data(config)
        model = build_fit_model(spec.model, config, data)
        if model.y_columns != len(spec.y_columns):
            raise SchemaMismatch(
                f"model '{model.name}' takes {model.y_columns} y column(s), "
                f"got {len(spec.y_columns)}"
            )

        unknown = (set(spec.initial) | set(spec.bounds) | set(spec.grid)) - set(model.param_names)
        if unknown:
            raise ConfigError(
                f"[fit] unknown parameters {sorted(unknown)} for model '{model.name}'",
                details={"parameters": model.param_names},
            )
        initial = {**model.initial, **spec.initial}
        bounds = {**model.bounds, **spec.bounds}
        weights = None
        if spec.use_errors and data.y_err is not None:
            # zero errors (noiseless points) fall back to unit weight
            safe = np.where(data.y_err > 0, data.y_err, 1.0)
            weights = 1.0 / safe
        problem = FitProblem(
            model=model.function,
            name=model.name,
            param_names=model.param_names,
            params_init=[initial[n] for n in model.param_names],
            bounds=[bounds[n] for n in model.param_names],
            data=data,
            weights=weights,
        )
        options = FitOptions(max_iter=spec.max_iter, x_tol=spec.x_tol, f_tol=spec.f_tol)

        with self._stage("fit"):
            if spec.grid_init and spec.grid:
                problem = problem.with_init(grid_init(problem, spec.grid))
            result = fit(problem, options)

        title = f"Fit of '{model.name}' to {spec.data.name}"
        report = format_report(result, spec.level, title=title)
        report_path = out / "fit_report.txt"
        report_path.write_text(report, encoding="utf-8")
        self._outputs.append(report_path)
        self._summary.update({f"fit.{k}": v for k, v in result.as_dict().items()})
        self._summary["fit.converged"] = result.converged
        self._summary["fit.residual_norm"] = result.residual_norm

        fitted = np.asarray(model.function(data.x, result.params), dtype=float)
        n = x_raw.size
        columns = [spec.x_column]
        for name in spec.y_columns:
            columns += [f"data_{name}", f"model_{name}"]
        rows = []
        for i in range(n):
            row: List[float] = [float(x_raw[i])]
            for j in range(len(spec.y_columns)):
                row += [float(data.y[j * n + i]), float(fitted[j * n + i])]
            rows.append(row)
        self._write(
            "fit_overlay",
            columns,
            rows,
            {spec.x_column: x_unit},
            {
                "title": report.splitlines()[0],
                "kind": "line",
                "x": {
                    "column": spec.x_column,
                    "label": f"{spec.x_column} ({x_unit})",
                    "log": False,
                },
                "y": {"label": ", ".join(spec.y_columns), "log": False},
                "series": [
                    {"column": c, "style": "points" if c.startswith("data_") else "line"}
                    for c in columns[1:]
                ],
            },
            out=out,
        )

        if not result.converged:
            raise MaxIterationsExceeded(
                f"fit of '{model.name}' stopped after {result.iterations} evaluations: "
                f"{result.message}",
                result=result,
            )


def _units(line: str) -> Dict[str, str]:
    """Parse a ``col=unit, col=unit`` units comment."""
    units: Dict[str, str] = {}
    for item in line.split(","):
        key, sep, value = item.partition("=")
        if sep:
            units[key.strip()] = value.strip()
    return units
