"""
Tests for the experiment runner and its output files.
"""

import numpy as np
import pytest

from src.core.runconfig import config_hash, parse_config
from src.core.runner import MANIFEST_NAME, ExperimentRunner, with_overrides
from src.sim.errors import ConfigError, MaxIterationsExceeded, SchemaMismatch
from src.utils import config as config_module
from src.utils.helpers import read_csv_table, read_json_file, write_csv


def column(path, name):
    columns, _, rows = read_csv_table(path)
    index = columns.index(name)
    return np.array([float(row[index]) for row in rows])


def run(text, tmp_path, sub="out", **overrides):
    config = with_overrides(parse_config(text, base_dir=tmp_path), tmp_path / sub, **overrides)
    return config, ExperimentRunner().run(config)


class TestManifest:
    """Test manifests and output placement."""

    def test_outputs_listed_and_present(self, tmp_path):
        """Test every output in the manifest exists next to it."""
        config, manifest = run("[run]\nexperiment = qubit-rabi\n", tmp_path)
        out = tmp_path / "out"
        assert set(manifest.outputs) == {"qubit_rabi.csv", "qubit_rabi.plot.json"}
        for name in manifest.outputs:
            assert (out / name).is_file()
        stored = read_json_file(out / MANIFEST_NAME)
        assert stored["config_hash"] == config_hash(config)
        assert stored["experiment"] == "qubit-rabi"
        assert "total" in stored["timings"]

    def test_settings_output_dir_fallback(self, tmp_path):
        """Test runs without an output directory use the settings default."""
        ExperimentRunner().run(parse_config("", experiment="rabi-thermal"))
        assert (tmp_path / "results" / "rabi_thermal.csv").is_file()

    def test_units_line(self, tmp_path):
        """Test tables start with their units."""
        run("[run]\nexperiment = qubit-rabi\n", tmp_path)
        _, comments, _ = read_csv_table(tmp_path / "out" / "qubit_rabi.csv")
        assert comments["units"].startswith("x_value=us")

    def test_plot_descriptor(self, tmp_path):
        """Test the plot descriptor names its table."""
        run("[run]\nexperiment = qubit-rabi\n", tmp_path)
        plot = read_json_file(tmp_path / "out" / "qubit_rabi.plot.json")
        assert plot["data"] == "qubit_rabi.csv"
        assert plot["series"][0]["column"] == "probability"


class TestExperiments:
    """Test each experiment end to end on small grids."""

    def test_spectrum(self, tmp_path):
        """Test the spectrum table and its dark-resonance comment."""
        _, manifest = run("[run]\nexperiment = spectrum\n\n[scan]\npoints = 11\n", tmp_path)
        path = tmp_path / "out" / "spectrum.csv"
        assert len(column(path, "counts_per_ms")) == 11
        _, comments, _ = read_csv_table(path)
        assert len(comments["dark_resonances_MHz"].split(",")) == 4
        assert manifest.summary["peak_counts_per_ms"] > 1.0

    def test_micromotion(self, tmp_path):
        """Test the map has one row per voltage, frequency and sweep."""
        text = (
            "[run]\nexperiment = micromotion\n\n[scan]\npoints = 11\n"
            "\n[micromotion]\nv_points = 3\n"
        )
        run(text, tmp_path)
        columns, _, rows = read_csv_table(tmp_path / "out" / "micromotion.csv")
        assert columns == ["v_comp_V", "drive_freq_MHz", "sweep_dir", "counts_per_ms"]
        assert len(rows) == 3 * 11 * 2
        assert {row[2] for row in rows} == {"up", "down"}

    def test_ground_state_sideband_ratio(self, tmp_path):
        """Test 100 us pulses at nbar 0.05 give an RSB/BSB ratio near 0.048."""
        _, manifest = run(
            "[run]\npreset = ground_state\nexperiment = sidebands\n\n[scan]\npoints = 41\n",
            tmp_path,
        )
        assert manifest.summary["rsb_bsb_ratio"] == pytest.approx(0.0476, rel=2e-2)
        bsb = column(tmp_path / "out" / "sidebands_pair.csv", "bsb")
        assert bsb[0] == 0.0
        assert bsb[-1] > 0.9

    def test_heating_without_heating(self, tmp_path):
        """Test zero heating leaves the red sideband flat."""
        run("[run]\nexperiment = heating\n\n[heating]\nrate_per_ms = 0\n", tmp_path)
        rsb = column(tmp_path / "out" / "heating.csv", "rsb")
        np.testing.assert_allclose(rsb, rsb[0], rtol=1e-12)

    def test_heating_raises_red_sideband(self, tmp_path):
        """Test the red sideband grows over the delay scan."""
        run("[run]\nexperiment = heating\n\n[heating]\nrate_per_ms = 0.5\n", tmp_path)
        rsb = column(tmp_path / "out" / "heating.csv", "rsb")
        assert rsb[1] > rsb[0]
        assert rsb[-1] > rsb[0] + 0.1

    def test_cooling(self, tmp_path):
        """Test cooling from the Doppler-cooled state reaches the ground state."""
        _, manifest = run("[run]\nexperiment = cooling\n", tmp_path)
        nbar = column(tmp_path / "out" / "cooling.csv", "nbar")
        assert len(nbar) == 4
        assert nbar[0] == pytest.approx(12.0, rel=1e-3)
        assert manifest.summary["final_nbar"] < 0.1
        assert manifest.summary["ground_state_population"] > 0.9

    def test_ramsey_is_reproducible(self, tmp_path):
        """Test equal seeds give byte-identical tables."""
        text = "[run]\nexperiment = ramsey\n\n[scan]\npoints = 6\n\n[qubit]\nshots_per_point = 20\n"
        run(text, tmp_path, sub="a", seed=11)
        run(text, tmp_path, sub="b", seed=11)
        first = (tmp_path / "a" / "ramsey.csv").read_bytes()
        assert first == (tmp_path / "b" / "ramsey.csv").read_bytes()

    def test_ramsey_seed_recorded(self, tmp_path):
        """Test the manifest records the seed used."""
        text = "[run]\nexperiment = ramsey\n\n[scan]\npoints = 3\n\n[qubit]\nshots_per_point = 5\n"
        _, manifest = run(text, tmp_path, seed=3)
        assert manifest.seed == 3

    def test_default_seed_enters_hash(self, tmp_path, monkeypatch):
        """Test runs seeded from the settings hash the seed they used."""
        text = "[run]\nexperiment = ramsey\n\n[scan]\npoints = 3\n\n[qubit]\nshots_per_point = 5\n"
        hashes = []
        for default in ("3", "4"):
            monkeypatch.setenv("IONTRAP_DEFAULT_SEED", default)
            monkeypatch.setattr(config_module, "_settings", None)
            config, manifest = run(text, tmp_path, sub=f"seed_{default}")
            assert config.run.seed is None
            assert manifest.seed == int(default)
            assert manifest.config_hash == config_hash(config, int(default))
            hashes.append(manifest.config_hash)
        assert hashes[0] != hashes[1]


class TestFitExperiment:
    """Test fitting a data file."""

    def write_data(self, tmp_path, x_us, y, columns=("x_value", "probability", "std_err")):
        rows = [(x, v, 0.0) for x, v in zip(x_us, y)]
        return write_csv(tmp_path / "data.csv", list(columns), rows, {"x_value": "us"})

    def test_linear_fit_in_si(self, tmp_path):
        """Test x values are converted to seconds before fitting."""
        x = np.linspace(0.0, 10.0, 11)
        self.write_data(tmp_path, x, 1.0 + 0.5 * x)
        text = "[run]\nexperiment = fit\n\n[fit]\nmodel = linear\ndata = data.csv\n"
        _, manifest = run(text, tmp_path)
        assert manifest.summary["fit.converged"]
        assert manifest.summary["fit.slope"] == pytest.approx(0.5e6, rel=1e-6)
        assert manifest.summary["fit.intercept"] == pytest.approx(1.0, abs=1e-9)
        out = tmp_path / "out"
        assert {"fit_report.txt", "fit_overlay.csv", "fit_overlay.plot.json"} <= set(
            manifest.outputs
        )
        overlay = column(out / "fit_overlay.csv", "model_probability")
        np.testing.assert_allclose(overlay, 1.0 + 0.5 * x, atol=1e-9)

    def test_constant_fit(self, tmp_path):
        """Test the constant model recovers the mean."""
        y = np.array([0.2, 0.4, 0.3, 0.5, 0.1])
        self.write_data(tmp_path, np.arange(5.0), y)
        text = "[run]\nexperiment = fit\n\n[fit]\nmodel = constant\ndata = data.csv\n"
        _, manifest = run(text, tmp_path)
        assert manifest.summary["fit.c"] == pytest.approx(0.3, abs=1e-9)
        report = (tmp_path / "out" / "fit_report.txt").read_text(encoding="utf-8")
        assert "converged: yes" in report

    def test_unknown_parameter(self, tmp_path):
        """Test initial values for parameters the model lacks are rejected."""
        self.write_data(tmp_path, np.arange(3.0), np.zeros(3))
        text = (
            "[run]\nexperiment = fit\n\n[fit]\nmodel = constant\ndata = data.csv\n"
            "\n[fit.initial]\nslope = 1\n"
        )
        with pytest.raises(ConfigError):
            run(text, tmp_path)

    def test_missing_column(self, tmp_path):
        """Test a y column absent from the file is a schema mismatch."""
        self.write_data(tmp_path, np.arange(3.0), np.zeros(3))
        text = (
            "[run]\nexperiment = fit\n\n[fit]\nmodel = constant\ndata = data.csv\n"
            "y_columns = fidelity\n"
        )
        with pytest.raises(SchemaMismatch) as exc_info:
            run(text, tmp_path)
        assert exc_info.value.details["missing"] == ["fidelity"]
        assert exc_info.value.details["experiment"] == "fit"

    def test_budget_exhausted_still_writes(self, tmp_path):
        """Test a non-converged fit writes its report before failing."""
        x = np.linspace(0.0, 100.0, 21)
        y = 0.5 * (1 - np.cos(2 * np.pi * 0.08e6 * x * 1e-6) * np.exp(-x / 60.0))
        self.write_data(tmp_path, x, y)
        text = (
            "[run]\nexperiment = fit\n\n[fit]\nmodel = qubit_rabi\ndata = data.csv\n"
            "max_iter = 1\n"
        )
        with pytest.raises(MaxIterationsExceeded) as exc_info:
            run(text, tmp_path)
        assert exc_info.value.result is not None
        assert (tmp_path / "out" / "fit_report.txt").is_file()
        assert (tmp_path / "out" / MANIFEST_NAME).is_file()
