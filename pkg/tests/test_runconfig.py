"""
Tests for run-configuration parsing, presets, serialization and hashing.
"""

import pytest

from src.core.runconfig import (
    config_hash,
    list_presets,
    load_config,
    parse_config,
    serialize_config,
)
from src.core.runner import with_overrides
from src.sim.errors import ConfigError, MissingSection, ParseError, UnknownKey
from src.utils.constants import Experiment


class TestPresets:
    """Test preset loading and overlay."""

    def test_shipped_presets(self):
        """Test both shipped presets are listed."""
        assert {"paper_defaults", "ground_state"} <= set(list_presets())

    def test_paper_defaults_apply(self):
        """Test a run file naming only the experiment gets the reference trap."""
        config = parse_config("[run]\nexperiment = spectrum\n")
        assert config.experiment == Experiment.SPECTRUM
        assert config.trap.endcap_voltage_V == 50.0
        assert config.trap.rf_frequency_MHz == 21.0
        assert config.trap.rf_amplitude_V == 200.0
        assert set(config.lasers) == {"422", "1092"}
        assert config.run.preset == "paper_defaults"

    def test_file_overlays_preset(self):
        """Test keys in the file replace preset keys one by one."""
        config = parse_config("[run]\nexperiment = heating\n\n[motion]\nnbar = 3\n")
        assert config.motion.nbar == 3.0
        assert config.motion.eta == 0.05

    def test_ground_state_chains_to_defaults(self):
        """Test ground_state overlays paper_defaults."""
        config = parse_config("[run]\npreset = ground_state\nexperiment = sidebands\n")
        assert config.motion.nbar == 0.05
        assert config.motion.carrier_rabi_kHz == 100.0
        assert config.motion.pulse_duration_us == 100.0
        assert config.trap.endcap_voltage_V == 50.0

    def test_no_preset_needs_every_section(self):
        """Test preset = none leaves required sections missing."""
        with pytest.raises(MissingSection):
            parse_config("[run]\npreset = none\nexperiment = spectrum\n")

    def test_unknown_preset(self):
        """Test an unknown preset name is a config error."""
        with pytest.raises(ConfigError) as exc_info:
            parse_config("[run]\npreset = nowhere\nexperiment = spectrum\n")
        assert exc_info.value.code == "unknown_preset"

    def test_experiment_argument(self):
        """Test the command name fills an absent experiment."""
        assert parse_config("", experiment="cooling").experiment == Experiment.COOLING


class TestParseErrors:
    """Test errors carry the offending section, key and line."""

    def test_empty_experiment(self):
        """Test a blank experiment is reported as missing."""
        with pytest.raises(MissingSection):
            parse_config("[run]\nexperiment =\n")

    def test_unknown_key(self):
        """Test an unknown key names its line."""
        text = "[run]\nexperiment = spectrum\n\n[trap]\nvoltage = 3\n"
        with pytest.raises(UnknownKey) as exc_info:
            parse_config(text, source="run.ini")
        assert exc_info.value.details["line"] == 5
        assert "run.ini:5" in str(exc_info.value)

    def test_unknown_section(self):
        """Test an unknown section is rejected."""
        with pytest.raises(UnknownKey) as exc_info:
            parse_config("[bogus]\nx = 1\n")
        assert exc_info.value.code == "unknown_section"
        assert exc_info.value.details["line"] == 1

    def test_malformed_line(self):
        """Test a line without a delimiter is a parse error at that line."""
        with pytest.raises(ParseError) as exc_info:
            parse_config("[run]\nexperiment = spectrum\nthis line is wrong\n")
        assert exc_info.value.line == 3

    def test_key_outside_section(self):
        """Test a key before any header is a parse error."""
        with pytest.raises(ParseError) as exc_info:
            parse_config("experiment = spectrum\n")
        assert exc_info.value.line == 1

    def test_invalid_value(self):
        """Test a non-numeric value names its line."""
        with pytest.raises(ParseError) as exc_info:
            parse_config("[run]\nexperiment = spectrum\n[trap]\nrf_amplitude_V = abc\n")
        assert exc_info.value.line == 4

    def test_unknown_experiment(self):
        """Test an experiment name outside the known set is rejected."""
        with pytest.raises(ParseError):
            parse_config("[run]\nexperiment = tomography\n")


class TestFitSection:
    """Test the [fit] section and its data path."""

    def test_fit_needs_section(self):
        """Test the fit experiment without [fit] is incomplete."""
        with pytest.raises(MissingSection):
            parse_config("[run]\nexperiment = fit\n")

    def test_missing_data_file(self, tmp_path):
        """Test a fit data file that does not exist is a config error."""
        text = "[run]\nexperiment = fit\n\n[fit]\nmodel = linear\ndata = nope.csv\n"
        with pytest.raises(ConfigError) as exc_info:
            parse_config(text, base_dir=tmp_path)
        assert exc_info.value.code == "data_missing"

    def test_relative_data_resolves_next_to_config(self, write_config, tmp_path):
        """Test a relative data path resolves against the config file's directory."""
        (tmp_path / "data.csv").write_text("x_value,probability\n0,0\n", encoding="utf-8")
        path = write_config(
            "[run]\nexperiment = fit\n\n[fit]\nmodel = constant\ndata = data.csv\n"
            "\n[fit.bounds]\nc = 0, 1\n\n[fit.initial]\nc = 0.5\n"
        )
        config = load_config(path)
        assert config.fit.data == (tmp_path / "data.csv").resolve()
        assert config.fit.bounds == {"c": (0.0, 1.0)}
        assert config.fit.initial == {"c": 0.5}
        assert config.fit.y_columns == ["probability"]

    def test_unreadable_config(self, tmp_path):
        """Test a missing config file is a config error."""
        with pytest.raises(ConfigError):
            load_config(tmp_path / "absent.ini")


class TestSerialization:
    """Test config text round trips."""

    def test_round_trip(self):
        """Test serialized text parses back to an equal configuration."""
        config = parse_config("[run]\nexperiment = ramsey\nseed = 4\n\n[motion]\nnbar = 2.5\n")
        assert parse_config(serialize_config(config)) == config

    def test_blank_values_written_empty(self):
        """Test unset optional values serialize as empty."""
        text = serialize_config(parse_config("[run]\nexperiment = cooling\n"))
        assert "\npulse_reference_n =\n" in text
        assert "\noutput_dir =\n" in text


class TestConfigHash:
    """Test the reproducibility hash."""

    def test_ignores_output_dir(self, tmp_path):
        """Test the output directory does not change the hash."""
        config = parse_config("[run]\nexperiment = spectrum\n")
        moved = with_overrides(config, output_dir=tmp_path / "elsewhere")
        assert config_hash(moved) == config_hash(config)

    def test_relevant_key_changes_hash(self):
        """Test the magnetic field changes the spectrum hash."""
        base = parse_config("[run]\nexperiment = spectrum\n")
        other = parse_config("[run]\nexperiment = spectrum\n\n[field]\nmagnetic_field_G = 2\n")
        assert config_hash(base) != config_hash(other)

    def test_irrelevant_section_ignored(self):
        """Test qubit settings do not change the spectrum hash."""
        base = parse_config("[run]\nexperiment = spectrum\n")
        other = parse_config("[run]\nexperiment = spectrum\n\n[qubit]\nrabi_frequency_kHz = 7\n")
        assert config_hash(base) == config_hash(other)

    def test_seed_only_counts_for_monte_carlo(self):
        """Test the seed changes the Ramsey hash but not the spectrum hash."""
        ramsey = parse_config("[run]\nexperiment = ramsey\n")
        spectrum = parse_config("[run]\nexperiment = spectrum\n")
        assert config_hash(with_overrides(ramsey, seed=1)) != config_hash(
            with_overrides(ramsey, seed=2)
        )
        assert config_hash(with_overrides(spectrum, seed=1)) == config_hash(
            with_overrides(spectrum, seed=2)
        )

    def test_experiment_changes_hash(self):
        """Test the same file under two experiments hashes differently."""
        assert config_hash(parse_config("", experiment="heating")) != config_hash(
            parse_config("", experiment="qubit-rabi")
        )

    def test_ramsey_ignores_unread_qubit_fields(self):
        """Test qubit Rabi settings do not change the Ramsey hash."""
        base = parse_config("[run]\nexperiment = ramsey\nseed = 1\n")
        other = parse_config(
            "[run]\nexperiment = ramsey\nseed = 1\n\n[qubit]\nrabi_frequency_kHz = 7\n"
            "decay_time_us = 12\n"
        )
        assert config_hash(base) == config_hash(other)

    def test_ramsey_reads_its_qubit_fields(self):
        """Test the Ramsey detuning changes the Ramsey hash."""
        base = parse_config("[run]\nexperiment = ramsey\nseed = 1\n")
        other = parse_config(
            "[run]\nexperiment = ramsey\nseed = 1\n\n[qubit]\nramsey_detuning_kHz = 5\n"
        )
        assert config_hash(base) != config_hash(other)

    def test_resolved_seed(self):
        """Test an explicit seed argument stands in for an unset [run] seed."""
        config = parse_config("[run]\nexperiment = ramsey\n")
        assert config.run.seed is None
        assert config_hash(config, 3) != config_hash(config, 4)
        assert config_hash(config, 3) == config_hash(with_overrides(config, seed=3))
