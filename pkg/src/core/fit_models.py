"""
Named fit models for the ``fit`` experiment.

Each builder binds the fixed context of a model (Lamb-Dicke parameter,
pulse lengths, lasers, ...) from the run configuration and returns a
FitModel whose function maps SI x values and a parameter vector to y.
Models over two y columns (``sideband_pair``, ``heating``) take the data
stacked: x repeated, first half red sideband, second half blue.
"""

from __future__ import annotations

import math
from typing import Callable, Dict, List, Mapping, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict

from ..sim.atom_optics import D32, P12, S12, fluorescence_spectrum, sr88_level_scheme
from ..sim.errors import SchemaMismatch
from ..sim.models import LaserField, ModelFunction, SidebandDrive, SignalCurve, ThermalState
from ..sim.motion_qubit import (
    carrier_rabi_signal,
    heating_scan,
    qubit_rabi_signal,
    sideband_excitation,
    sideband_spectrum,
)
from ..sim.trap_model import secular_frequencies
from ..utils.constants import TWO_PI
from .runconfig import RunConfig


class FitModel(BaseModel):
    """A model function with its parameter names, start values and bounds."""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    name: str
    function: ModelFunction
    param_names: List[str]
    initial: Dict[str, float]
    bounds: Dict[str, Tuple[float, float]]
    y_columns: int = 1


Builder = Callable[[RunConfig, SignalCurve], FitModel]


def _halves(x: np.ndarray) -> np.ndarray:
    if x.size % 2:
        raise ValueError("stacked pair data needs an even number of points")
    return x[: x.size // 2]


def _constant(config: RunConfig, data: SignalCurve) -> FitModel:
    return FitModel(
        name="constant",
        function=lambda x, p: np.full(x.shape, p[0]),
        param_names=["c"],
        initial={"c": float(np.mean(data.y))},
        bounds={"c": (-math.inf, math.inf)},
    )


def _linear(config: RunConfig, data: SignalCurve) -> FitModel:
    slope, intercept = np.polyfit(data.x, data.y, 1) if len(data) > 1 else (0.0, data.y[0])
    return FitModel(
        name="linear",
        function=lambda x, p: p[0] + p[1] * x,
        param_names=["intercept", "slope"],
        initial={"intercept": float(intercept), "slope": float(slope)},
        bounds={"intercept": (-math.inf, math.inf), "slope": (-math.inf, math.inf)},
    )


def _carrier_rabi(config: RunConfig, data: SignalCurve) -> FitModel:
    motion = config.motion

    def function(x: np.ndarray, p: np.ndarray) -> np.ndarray:
        state = ThermalState.from_nbar(float(p[0]), motion.tail_mass)
        drive = SidebandDrive(eta=motion.eta, omega0=TWO_PI * p[1] * 1e3)
        # exact Laguerre rates, no expansion limit on nbar
        return carrier_rabi_signal(state, drive, x, exact=True).y

    return FitModel(
        name="carrier_rabi",
        function=function,
        param_names=["nbar", "rabi_kHz"],
        initial={"nbar": motion.nbar, "rabi_kHz": motion.carrier_rabi_kHz},
        bounds={"nbar": (0.0, 60.0), "rabi_kHz": (1.0, 5e3)},
    )


def _sideband_drive(config: RunConfig, order: int = 0) -> SidebandDrive:
    motion = config.motion
    return SidebandDrive(
        eta=motion.eta,
        omega0=TWO_PI * motion.carrier_rabi_kHz * 1e3,
        order=order,
        duration=motion.pulse_duration_us * 1e-6,
    )


def _sidebands(config: RunConfig, data: SignalCurve) -> FitModel:
    motion = config.motion
    omega_ax = secular_frequencies(config.trap.trap_config()).omega_ax
    drive = _sideband_drive(config)

    def function(x: np.ndarray, p: np.ndarray) -> np.ndarray:
        state = ThermalState.from_nbar(float(p[0]), motion.tail_mass)
        return sideband_spectrum(state, drive, TWO_PI * x, float(p[1]), omega_ax).y

    return FitModel(
        name="sidebands",
        function=function,
        param_names=["nbar", "carrier_offset"],
        initial={"nbar": motion.nbar, "carrier_offset": max(motion.carrier_offset, 0.01)},
        bounds={"nbar": (0.0, 60.0), "carrier_offset": (0.0, 0.5)},
    )


def _sideband_pair(config: RunConfig, data: SignalCurve) -> FitModel:
    motion = config.motion
    red, blue = _sideband_drive(config, -1), _sideband_drive(config, 1)

    def function(x: np.ndarray, p: np.ndarray) -> np.ndarray:
        t = _halves(x)
        state = ThermalState.from_nbar(float(p[0]), motion.tail_mass)
        rsb = [sideband_excitation(state, red, float(ti)) for ti in t]
        bsb = [sideband_excitation(state, blue, float(ti)) for ti in t]
        return np.concatenate([rsb, bsb])

    return FitModel(
        name="sideband_pair",
        function=function,
        param_names=["nbar"],
        initial={"nbar": max(motion.nbar, 0.1)},
        bounds={"nbar": (0.0, 60.0)},
        y_columns=2,
    )


def _heating(config: RunConfig, data: SignalCurve) -> FitModel:
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

    def function(x: np.ndarray, p: np.ndarray) -> np.ndarray:
        rsb, bsb = heating_scan(
            float(p[1]), float(p[0]) * 1e3, _halves(x), probe, float(p[2]), motion.tail_mass
        )
        return np.concatenate([rsb.y, bsb.y])

    return FitModel(
        name="heating",
        function=function,
        param_names=["rate_per_ms", "nbar0", "carrier_offset"],
        initial={
            "rate_per_ms": heating.rate_per_ms,
            "nbar0": heating.nbar0,
            "carrier_offset": heating.carrier_offset,
        },
        bounds={
            "rate_per_ms": (0.0, 10.0),
            "nbar0": (0.0, 10.0),
            "carrier_offset": (0.0, 0.5),
        },
        y_columns=2,
    )


def _qubit_rabi(config: RunConfig, data: SignalCurve) -> FitModel:
    qubit = config.qubit

    def function(x: np.ndarray, p: np.ndarray) -> np.ndarray:
        return qubit_rabi_signal(p[0] * 1e3, p[1] * 1e3, x, p[2] * 1e-6).y

    return FitModel(
        name="qubit_rabi",
        function=function,
        param_names=["rabi_kHz", "detuning_kHz", "decay_time_us"],
        initial={
            "rabi_kHz": qubit.rabi_frequency_kHz,
            "detuning_kHz": qubit.detuning_kHz,
            "decay_time_us": qubit.decay_time_us,
        },
        bounds={
            "rabi_kHz": (0.0, 1e4),
            "detuning_kHz": (-1e4, 1e4),
            "decay_time_us": (1e-3, 1e8),
        },
    )


def _ramsey(config: RunConfig, data: SignalCurve) -> FitModel:
    def function(x: np.ndarray, p: np.ndarray) -> np.ndarray:
        t2, detuning, contrast, offset, phase = p
        envelope = np.exp(-x / (t2 * 1e-3))
        return offset + 0.5 * contrast * envelope * np.cos(TWO_PI * detuning * 1e3 * x + phase)

    return FitModel(
        name="ramsey",
        function=function,
        param_names=["t2_ms", "detuning_kHz", "contrast", "offset", "phase"],
        initial={
            "t2_ms": 2.0,
            "detuning_kHz": config.qubit.ramsey_detuning_kHz,
            "contrast": 1.0,
            "offset": 0.5,
            "phase": 0.0,
        },
        bounds={
            "t2_ms": (1e-3, 1e4),
            "detuning_kHz": (-1e3, 1e3),
            "contrast": (0.0, 2.0),
            "offset": (0.0, 1.0),
            "phase": (-math.pi, math.pi),
        },
    )


def _laser_index(fields: List[LaserField], lower: str, upper: str) -> int:
    for i, field in enumerate(fields):
        if set(field.transition) == {lower, upper}:
            return i
    raise SchemaMismatch(f"the spectrum model needs a laser on {lower}-{upper}")


def _spectrum(config: RunConfig, data: SignalCurve) -> FitModel:
    fields = config.laser_fields()
    detection = config.detection.to_model()
    window_ms = detection.detection_time * 1e3
    cooling, repump = _laser_index(fields, S12, P12), _laser_index(fields, D32, P12)

    def function(x: np.ndarray, p: np.ndarray) -> np.ndarray:
        delta_1092, s422, s1092, field_g, linewidth = (float(v) for v in p)
        trial = list(fields)
        trial[cooling] = fields[cooling].model_copy(
            update={"saturation": s422, "linewidth": linewidth}
        )
        trial[repump] = fields[repump].model_copy(
            update={"detuning": delta_1092, "saturation": s1092, "linewidth": linewidth}
        )
        scheme = sr88_level_scheme(field_g)
        counts = fluorescence_spectrum(scheme, trial, x * 1e-6, detection).y
        return counts / window_ms

    return FitModel(
        name="spectrum",
        function=function,
        param_names=["delta_1092_MHz", "s422", "s1092", "magnetic_field_G", "linewidth_MHz"],
        initial={
            "delta_1092_MHz": fields[repump].detuning,
            "s422": fields[cooling].saturation,
            "s1092": fields[repump].saturation,
            "magnetic_field_G": config.field.magnetic_field_G,
            "linewidth_MHz": fields[cooling].linewidth,
        },
        bounds={
            "delta_1092_MHz": (-200.0, 200.0),
            "s422": (1e-3, 100.0),
            "s1092": (1e-3, 100.0),
            "magnetic_field_G": (0.01, 50.0),
            "linewidth_MHz": (0.0, 20.0),
        },
    )


FIT_MODELS: Mapping[str, Builder] = {
    "constant": _constant,
    "linear": _linear,
    "carrier_rabi": _carrier_rabi,
    "sidebands": _sidebands,
    "sideband_pair": _sideband_pair,
    "heating": _heating,
    "qubit_rabi": _qubit_rabi,
    "ramsey": _ramsey,
    "spectrum": _spectrum,
}


def list_fit_models() -> List[str]:
    return list(FIT_MODELS)


def build_fit_model(name: str, config: RunConfig, data: SignalCurve) -> FitModel:
    """
    Bind a named model to a configuration and data set.

    Raises:
        SchemaMismatch: Unknown model name.
    """
    try:
        builder = FIT_MODELS[name]
    except KeyError:
        raise SchemaMismatch(
            f"Unknown fit model '{name}'. Available: {', '.join(FIT_MODELS)}",
            code="unknown_model",
        ) from None
    return builder(config, data)
