import json
from pathlib import Path

import pytest

from dopptrack.cli import EXIT_CONFIG, EXIT_OK, build_parser, main
from dopptrack.pipeline import bundled_scenario_path


def run_cli(*argv):
    return main([str(a) for a in argv])


class TestParsing:
    def test_help_lists_subcommands(self, capsys):
        with pytest.raises(SystemExit):
            build_parser().parse_args(["--help"])
        out = capsys.readouterr().out
        for name in ("simulate", "detect", "track", "pipeline", "report",
                     "sweep", "validate-config"):
            assert name in out

    def test_missing_subcommand_is_an_error(self):
        with pytest.raises(SystemExit):
            build_parser().parse_args([])


class TestValidateConfig:
    def test_bundled_name_resolves(self, capsys):
        assert run_cli("validate-config", "--config", "smoke_small") == EXIT_OK
        out = capsys.readouterr().out
        assert "smoke_small: ok" in out
        assert "20 detection instants" in out

    def test_missing_file_exits_config(self, capsys):
        assert run_cli("validate-config", "--config", "/no/such.json") == EXIT_CONFIG
        assert "config error" in capsys.readouterr().err

    def test_invalid_json_exits_config(self, tmp_path, capsys):
        bad = tmp_path / "bad.json"
        bad.write_text("{not json")
        assert run_cli("validate-config", "--config", bad) == EXIT_CONFIG

    def test_bad_value_exits_config(self, tmp_path, capsys):
        data = json.loads(bundled_scenario_path("smoke_small").read_text())
        data["detector"]["gamma"] = -1.0
        cfg = tmp_path / "neg.json"
        cfg.write_text(json.dumps(data))
        assert run_cli("validate-config", "--config", cfg) == EXIT_CONFIG
        assert "gamma" in capsys.readouterr().err


@pytest.fixture(scope="module")
def stage_dir(tmp_path_factory):
    return tmp_path_factory.mktemp("stages")


@pytest.fixture(scope="module")
def run_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("pipe")
    rc = main(["--quiet", "pipeline", "--config", "smoke_small",
               "--out-dir", str(out)])
    assert rc == EXIT_OK
    return out


class TestStagedWorkflow:
    def test_simulate_writes_capture(self, stage_dir, capsys):
        rc = run_cli("simulate", "--config", "smoke_small",
                     "--out-dir", stage_dir / "cap")
        assert rc == EXIT_OK
        sidecar = json.loads((stage_dir / "cap" / "capture.json").read_text())
        assert sidecar["num_detection_instants"] == 20
        for name in sidecar["files"]:
            assert (stage_dir / "cap" / name).exists()

    def test_detect_from_capture(self, stage_dir, capsys):
        rc = run_cli("detect", "--config", "smoke_small",
                     "--capture", stage_dir / "cap" / "capture.json",
                     "--out-dir", stage_dir / "det")
        assert rc == EXIT_OK
        text = (stage_dir / "det" / "detections_raw.csv").read_text()
        assert text.startswith("k,t_s,")
        assert len(text.splitlines()) == 21

    def test_track_from_detections(self, stage_dir, capsys):
        rc = run_cli("track", "--config", "smoke_small",
                     "--detections", stage_dir / "det" / "detections_raw.csv",
                     "--out-dir", stage_dir / "trk")
        assert rc == EXIT_OK
        for name in ("detections_smoothed.csv", "track.csv", "error_cdf.csv"):
            assert (stage_dir / "trk" / name).exists()


class TestPipelineCommand:
    def test_products_exist(self, run_dir):
        assert (run_dir / "manifest.json").exists()
        assert (run_dir / "track.csv").exists()

    def test_seed_override_changes_outputs(self, run_dir, tmp_path, capsys):
        rc = run_cli("--quiet", "pipeline", "--config", "smoke_small",
                     "--seed", 7, "--out-dir", tmp_path)
        assert rc == EXIT_OK
        a = (run_dir / "detections_raw.csv").read_bytes()
        b = (tmp_path / "detections_raw.csv").read_bytes()
        assert a != b
        assert json.loads((tmp_path / "manifest.json").read_text())["seed"] == 7

    def test_report_renders_figures(self, run_dir, capsys):
        rc = run_cli("report", "--run-dir", run_dir)
        assert rc == EXIT_OK
        for name in ("trajectory.png", "detections.png", "error_cdf.png",
                     "spectrogram_path2.png", "spectrogram_path3.png"):
            assert (run_dir / name).stat().st_size > 0

    def test_pipeline_report_flag(self, tmp_path, capsys):
        rc = run_cli("--quiet", "pipeline", "--config", "smoke_small",
                     "--report", "--out-dir", tmp_path)
        assert rc == EXIT_OK
        assert (tmp_path / "trajectory.png").exists()


class TestSweepCommand:
    def test_grid_and_reps(self, tmp_path, capsys):
        rc = run_cli("--quiet", "sweep", "--config", "smoke_small",
                     "--out-dir", tmp_path,
                     "--param", "detector.gamma=1.5,3.0",
                     "--reps", 1, "--workers", 1)
        assert rc == EXIT_OK
        lines = (tmp_path / "sweep.csv").read_text().splitlines()
        assert len(lines) == 3

    def test_malformed_param_exits_config(self, tmp_path, capsys):
        rc = run_cli("sweep", "--config", "smoke_small", "--out-dir", tmp_path,
                     "--param", "detector.gamma", "--reps", 1)
        assert rc == EXIT_CONFIG
