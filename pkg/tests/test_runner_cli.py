"""End-to-end tests: configuration runs, re-analysis and the command line."""

import copy
import json
import math

import pytest
import yaml
from loguru import logger

from mrfm_spincat import AnalysisError, analyze_directory, parse_config, run
from mrfm_spincat.cli import EXIT_IO_ERROR, EXIT_OK, EXIT_SIMULATION_ERROR, main
from mrfm_spincat.config import load_config
from mrfm_spincat.outputs import read_snapshot, read_table
from mrfm_spincat.runner import SWEEP_COLUMNS

pytestmark = pytest.mark.integration


def build(data):
    return parse_config(yaml.safe_dump(data))


def read_summary(out_dir):
    return yaml.safe_load((out_dir / "summary.yaml").read_text(encoding="utf-8"))


def read_events(out_dir):
    lines = (out_dir / "events.jsonl").read_text(encoding="utf-8").splitlines()
    return [json.loads(line) for line in lines]


def sweep_rows(out_dir):
    """Sweep table keyed by the (eta, spin) cells, labels dropped."""
    lines = (out_dir / "sweep_summary.tsv").read_text(encoding="utf-8").splitlines()
    header = lines[0].removeprefix("# ").split("\t")
    rows = {}
    for line in lines[1:]:
        cells = dict(zip(header, line.split("\t"), strict=True))
        rows[(cells["eta"], cells["spin"])] = [float(cells[name]) for name in SWEEP_COLUMNS]
    return rows


def sweep_config(base, out_dir, eta, spin, workers=1):
    data = copy.deepcopy(base)
    data["run"].update(mode="sweep", workers=workers)
    data["sweep"] = {"mode": "quantum", "eta": eta, "spin": spin}
    data["outputs"] = {"dir": str(out_dir), "formats": ["timeseries"]}
    return build(data)


@pytest.fixture
def restore_logging():
    yield
    logger.remove()
    logger.disable("mrfm_spincat")


class TestQuantumRun:
    """Tests for a complete quantum run."""

    def test_writes_outputs(self, tiny_config, tmp_path):
        result = run(build(tiny_config))
        out = tmp_path / "out"
        assert result.out_dir == out
        for name in (
            "effective_config.yaml",
            "summary.yaml",
            "timeseries.tsv",
            "snapshot_000.tsv",
            "snapshot_002.tsv",
            "events.jsonl",
            "plots/density_panel_01_tau1.0000.tsv",
            "plots/trajectory.tsv",
            "plots/decomposition.tsv",
        ):
            assert (out / name).exists(), name
        assert out / "events.jsonl" in result.files

    def test_timeseries_and_summary(self, tiny_config, tmp_path):
        run(build(tiny_config))
        series = read_table(tmp_path / "out" / "timeseries.tsv")
        assert series["tau"][0] == 0.0
        assert series["tau"][-1] == 2.0
        assert len(series["tau"]) == 12
        summary = read_summary(tmp_path / "out")
        assert summary["mode"] == "quantum"
        assert summary["samples"] == 12
        assert summary["norm_defect"] < 1e-10
        assert summary["split_tau"] is None
        assert summary["initial_misalignment"] == pytest.approx(math.atan2(5.0, 20.0))
        assert [s["tau"] for s in summary["snapshots"]] == [0.0, 1.0, 2.0]
        assert summary["final_mean_z"] == pytest.approx(series["mean_z"][-1])

    def test_effective_config_reproduces_run(self, tiny_config, tmp_path):
        cfg = build(tiny_config)
        run(cfg)
        assert load_config(tmp_path / "out" / "effective_config.yaml") == cfg

    def test_rerun_is_byte_identical(self, tiny_config, tmp_path):
        cfg = build(tiny_config)
        out = tmp_path / "out"
        run(cfg)
        first = {
            name: (out / name).read_bytes()
            for name in ("timeseries.tsv", "snapshot_001.tsv", "summary.yaml")
        }
        run(cfg)
        for name, content in first.items():
            assert (out / name).read_bytes() == content, name

    def test_event_log(self, tiny_config, tmp_path):
        run(build(tiny_config))
        lines = (tmp_path / "out" / "events.jsonl").read_text(encoding="utf-8").splitlines()
        events = [json.loads(line) for line in lines]
        assert events[0]["sub_event"] == "RUN_START"
        assert events[0]["event_type"] == "lifecycle"
        assert events[-1]["sub_event"] == "RUN_FINISH"
        assert events[-1]["data"]["success"] is True
        assert "PROPAGATE_FINISH" in {event["sub_event"] for event in events}

    def test_short_phase_window_is_reported(self, tiny_config, tmp_path):
        tiny_config["run"]["phase_window"] = [0.0, 1.5]
        run(build(tiny_config))
        summary = read_summary(tmp_path / "out")
        assert "three periods" in summary["phase_fit"]["error"]
        assert math.isnan(summary["phase"])

    def test_selected_formats_only(self, tiny_config, tmp_path):
        tiny_config["outputs"]["formats"] = ["timeseries"]
        run(build(tiny_config))
        out = tmp_path / "out"
        assert (out / "timeseries.tsv").exists()
        assert not (out / "snapshot_000.tsv").exists()
        assert not (out / "plots").exists()


class TestOtherModes:
    """Tests for classical, correspondence and sweep runs."""

    def test_classical(self, tiny_config, tmp_path):
        tiny_config["run"]["mode"] = "classical"
        tiny_config["physical"] = {
            "g_factor": 2.0,
            "magneton": 9.2740100783e-24,
            "B0": 0.1,
            "B1": 1e-6,
            "field_gradient": 1e3,
            "effective_mass": 1e-12,
            "omega_c": 6.283185307179586e4,
            "quality_factor": 1e4,
        }
        run(build(tiny_config))
        out = tmp_path / "out"
        table = read_table(out / "classical.tsv")
        assert table["tau"][-1] == 2.0
        assert table["z"][0] == pytest.approx(-2.0)
        summary = read_summary(out)
        assert summary["mode"] == "classical"
        assert summary["spin_drift_rate"] < 1e-7
        assert summary["final_z"] == pytest.approx(table["z"][-1])
        assert summary["stationary_amplitude_m"] is None

    def test_correspondence(self, tiny_config, tmp_path):
        tiny_config["run"]["mode"] = "correspondence"
        run(build(tiny_config))
        out = tmp_path / "out"
        table = read_table(out / "correspondence.tsv")
        assert list(table)[:3] == ["tau", "quantum_mean_z", "classical_z"]
        assert table["classical_z"][0] == pytest.approx(table["quantum_mean_z"][0])
        summary = read_summary(out)
        assert summary["quantum"]["samples"] == 12
        assert summary["classical"]["samples"] == len(table["tau"])
        assert summary["compared_until"] == 2.0
        assert summary["max_envelope_deviation"] >= 0.0

    def test_sweep(self, tiny_config, tmp_path):
        tiny_config["run"]["mode"] = "sweep"
        tiny_config["sweep"] = {"mode": "quantum", "eta": [0.0, 0.3, 1.0], "spin": ["up", "down"]}
        tiny_config["outputs"]["formats"] = ["timeseries"]
        result = run(build(tiny_config))
        out = tmp_path / "out"
        for index in range(6):
            member = read_summary(out / f"run_{index:03d}")
            assert member["mode"] == "quantum"
        lines = (out / "sweep_summary.tsv").read_text(encoding="utf-8").splitlines()
        assert lines[0].startswith("# run\teta\tspin\tsplit_tau\tbranching_ratio")
        assert len(lines) == 7
        assert lines[2].split("\t")[:3] == ["run_001", "0.0", "down"]
        assert result.summary["runs"] == 6
        assert result.summary["members"][5]["eta"] == 1.0


class TestEventLogs:
    """Tests for the per-run event logs."""

    def test_rerun_replaces_log(self, tiny_config, tmp_path):
        cfg = build(tiny_config)
        run(cfg)
        first = read_events(tmp_path / "out")
        run(cfg)
        second = read_events(tmp_path / "out")
        assert len(second) == len(first)
        assert [e["sub_event"] for e in second].count("RUN_START") == 1

    def test_in_process_members_stay_out_of_parent_log(self, tiny_config, tmp_path):
        out = tmp_path / "sweep"
        run(sweep_config(tiny_config, out, [0.0, 0.3], ["up"]))
        parent = read_events(out)
        assert [e["sub_event"] for e in parent] == ["RUN_START", "RUN_FINISH"]
        assert all("member" not in e["data"] for e in parent)
        for index in range(2):
            member = read_events(out / f"run_{index:03d}")
            assert member[0]["sub_event"] == "LIFECYCLE_START"
            assert member[0]["data"]["member"] == f"run_{index:03d}"
            assert member[1]["sub_event"] == "RUN_START"
            assert member[-1]["sub_event"] == "LIFECYCLE_FINISH"
            assert "PROPAGATE_FINISH" in {e["sub_event"] for e in member}


class TestSweepIndependence:
    """Sweep results depend only on the member parameters."""

    def test_member_order(self, tiny_config, tmp_path):
        run(sweep_config(tiny_config, tmp_path / "a", [0.0, 0.3], ["up", "down"]))
        run(sweep_config(tiny_config, tmp_path / "b", [0.3, 0.0], ["down", "up"]))
        forward, backward = sweep_rows(tmp_path / "a"), sweep_rows(tmp_path / "b")
        assert forward.keys() == backward.keys()
        for key, values in forward.items():
            assert backward[key] == pytest.approx(values, rel=1e-12, nan_ok=True), key

    @pytest.mark.slow
    def test_worker_count(self, tiny_config, tmp_path):
        run(sweep_config(tiny_config, tmp_path / "one", [0.0, 0.3], ["up"], workers=1))
        run(sweep_config(tiny_config, tmp_path / "two", [0.0, 0.3], ["up"], workers=2))
        serial, pooled = sweep_rows(tmp_path / "one"), sweep_rows(tmp_path / "two")
        assert serial.keys() == pooled.keys()
        for key, values in serial.items():
            assert pooled[key] == pytest.approx(values, rel=1e-12, nan_ok=True), key
        one_log = [e["sub_event"] for e in read_events(tmp_path / "one")]
        two_log = [e["sub_event"] for e in read_events(tmp_path / "two")]
        assert one_log == two_log


class TestAnalyzeDirectory:
    """Tests for re-analysing stored snapshots."""

    def test_matches_stored_rows(self, tiny_config, tmp_path):
        run(build(tiny_config))
        out = tmp_path / "out"
        rows = analyze_directory(out)
        assert len(rows) == 3
        stored = [read_snapshot(out / f"snapshot_{i:03d}.tsv").row for i in range(3)]
        for fresh, old in zip(rows, stored, strict=True):
            assert fresh.as_tuple() == pytest.approx(old.as_tuple(), nan_ok=True)
        assert (out / "analysis.tsv").exists()
        assert (out / "analysis" / "decomposition.tsv").exists()
        assert len(list((out / "analysis").glob("density_panel_*.tsv"))) == 3

    def test_without_snapshots(self, tmp_path):
        with pytest.raises(AnalysisError):
            analyze_directory(tmp_path)


@pytest.mark.usefixtures("restore_logging")
class TestCli:
    """Tests for the ``mrfm-spincat`` entry point."""

    def test_validate_prints_effective_config(self, tiny_config, config_file, capsys):
        assert main(["validate", str(config_file(tiny_config))]) == EXIT_OK
        printed = yaml.safe_load(capsys.readouterr().out)
        assert printed["run"]["t_end"] == 2.0
        assert printed["model"]["schedule"] == "custom"

    def test_run_with_overrides(self, tiny_config, config_file, tmp_path):
        path = config_file(tiny_config)
        out = tmp_path / "cli_out"
        code = main(["-q", "run", str(path), "--out", str(out), "--snapshots", "0.5,1.5"])
        assert code == EXIT_OK
        assert (out / "snapshot_001.tsv").exists()
        assert not (out / "snapshot_002.tsv").exists()
        assert read_snapshot(out / "snapshot_000.tsv").tau == 0.5

    def test_verbose_run(self, tiny_config, config_file):
        tiny_config["run"]["mode"] = "classical"
        assert main(["-v", "run", str(config_file(tiny_config))]) == EXIT_OK

    def test_invalid_config(self, tiny_config, config_file):
        tiny_config["model"]["eta"] = -1.0
        assert main(["validate", str(config_file(tiny_config))]) == EXIT_SIMULATION_ERROR

    def test_sweep_verb_needs_sweep_mode(self, tiny_config, config_file):
        assert main(["sweep", str(config_file(tiny_config))]) == EXIT_SIMULATION_ERROR

    def test_missing_file(self, tmp_path):
        assert main(["run", str(tmp_path / "absent.yaml")]) == EXIT_IO_ERROR

    def test_analyze_empty_directory(self, tmp_path):
        assert main(["analyze", str(tmp_path)]) == EXIT_SIMULATION_ERROR

    def test_analyze_after_run(self, tiny_config, config_file, tmp_path):
        assert main(["-q", "run", str(config_file(tiny_config))]) == EXIT_OK
        assert main(["analyze", str(tmp_path / "out"), "--threshold", "1e-6"]) == EXIT_OK
        assert (tmp_path / "out" / "analysis.tsv").exists()
