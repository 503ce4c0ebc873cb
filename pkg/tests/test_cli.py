from __future__ import annotations

import json
from pathlib import Path

import pytest

from trafficfd.cli import main

CONFIG = """\
camera.focal_length_mm = 5.0
camera.sensor_height_mm = 1.8
camera.sensor_width_mm = 3.25
camera.altitude_m = 200.0
camera.image_width_px = 3250
camera.image_height_px = 1800
camera.fps = 25.0
tracker.min_hits_to_confirm = 1
"""

SCENARIO = """\
camera.focal_length_mm = 5.0
camera.sensor_height_mm = 1.8
camera.sensor_width_mm = 3.25
camera.altitude_m = 200.0
camera.image_width_px = 3250
camera.image_height_px = 1800
camera.fps = 25.0
scenario.duration_frames = 120
scenario.v0_kmh = 36.0
scenario.seed_vehicles = 2
scenario.arrival_rate_veh_s = 0.2
lane.0.y_px = 500
lane.0.direction = 1
lane.1.y_px = 900
lane.1.direction = -1
"""


@pytest.fixture
def config_path(tmp_path) -> Path:
    path = tmp_path / "run.cfg"
    path.write_text(CONFIG, encoding="utf-8")
    return path


@pytest.fixture
def scenario_path(tmp_path) -> Path:
    path = tmp_path / "scenario.cfg"
    path.write_text(SCENARIO, encoding="utf-8")
    return path


@pytest.fixture
def detections_path(tmp_path) -> Path:
    # one vehicle moving 10 px/frame for 60 frames
    lines = ["frame,id,bb_left,bb_top,bb_width,bb_height,conf,class"]
    for frame in range(60):
        lines.append(f"{frame},-1,{100 + 10 * frame},500,64,32,0.95,0")
    path = tmp_path / "dets.csv"
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


def read_all_bytes(directory: Path) -> dict[str, bytes]:
    return {p.name: p.read_bytes() for p in sorted(directory.iterdir()) if p.is_file()}


def test_track_happy_path(config_path, detections_path, tmp_path, capsys):
    out = tmp_path / "out"
    assert main(["track", "--detections", str(detections_path), "--config", str(config_path), "--out", str(out)]) == 0
    assert (out / "tracks.csv").exists()
    assert (out / "frame_stats.csv").exists()
    assert "tracked" in capsys.readouterr().out


def test_track_quiet_silences_summary(config_path, detections_path, tmp_path, capsys):
    out = tmp_path / "out"
    code = main(
        ["track", "--detections", str(detections_path), "--config", str(config_path), "--out", str(out), "--quiet"]
    )
    assert code == 0
    assert capsys.readouterr().out == ""


def test_track_malformed_csv_cites_line(config_path, tmp_path, capsys):
    bad = tmp_path / "bad.csv"
    bad.write_text("0,-1,0,0,10,10,0.9,0\n1,-1,0,0,-10,10,0.9,0\n", encoding="utf-8")
    code = main(["track", "--detections", str(bad), "--config", str(config_path), "--out", str(tmp_path / "out")])
    assert code == 2
    err = capsys.readouterr().err
    assert "line 2" in err and "bb_width" in err


def test_track_empty_detections(config_path, tmp_path):
    empty = tmp_path / "empty.csv"
    empty.write_text("", encoding="utf-8")
    out = tmp_path / "out"
    assert main(["track", "--detections", str(empty), "--config", str(config_path), "--out", str(out)]) == 0
    assert (out / "tracks.csv").read_text(encoding="utf-8").count("\n") == 1
    assert (out / "frame_stats.csv").read_text(encoding="utf-8").count("\n") == 1


def test_track_missing_config_file(detections_path, tmp_path, capsys):
    code = main(
        ["track", "--detections", str(detections_path), "--config", str(tmp_path / "nope.cfg"), "--out", str(tmp_path / "o")]
    )
    assert code == 2
    assert "nope.cfg" in capsys.readouterr().err


def test_usage_error_exit_code():
    assert main([]) == 1
    assert main(["frobnicate"]) == 1
    assert main(["track", "--detections", "x.csv"]) == 1


def test_run_needs_exactly_one_input(config_path, tmp_path, capsys):
    assert main(["run", "--config", str(config_path), "--out", str(tmp_path / "o")]) == 1
    assert "exactly one" in capsys.readouterr().err


def test_run_with_detections_requires_config(detections_path, tmp_path, capsys):
    assert main(["run", "--detections", str(detections_path), "--out", str(tmp_path / "o")]) == 1
    assert "--config" in capsys.readouterr().err


def test_simulate_deterministic_outputs(scenario_path, tmp_path):
    out1, out2 = tmp_path / "s1", tmp_path / "s2"
    assert main(["simulate", "--scenario", str(scenario_path), "--out", str(out1), "--seed", "7"]) == 0
    assert main(["simulate", "--scenario", str(scenario_path), "--out", str(out2), "--seed", "7"]) == 0
    assert read_all_bytes(out1) == read_all_bytes(out2)
    assert (out1 / "ground_truth.csv").exists()
    assert (out1 / "detections.csv").exists()


def test_simulate_seed_changes_stream(scenario_path, tmp_path):
    out1, out2 = tmp_path / "s1", tmp_path / "s2"
    noisy = scenario_path.read_text(encoding="utf-8") + "scenario.noise_sigma_px = 1.0\n"
    scenario_path.write_text(noisy, encoding="utf-8")
    main(["simulate", "--scenario", str(scenario_path), "--out", str(out1), "--seed", "1"])
    main(["simulate", "--scenario", str(scenario_path), "--out", str(out2), "--seed", "2"])
    assert (out1 / "detections.csv").read_bytes() != (out2 / "detections.csv").read_bytes()


def test_run_on_scenario_writes_manifest(scenario_path, config_path, tmp_path, capsys):
    out = tmp_path / "out"
    code = main(["run", "--scenario", str(scenario_path), "--config", str(config_path), "--out", str(out)])
    assert code == 0
    manifest = json.loads((out / "manifest.json").read_text(encoding="utf-8"))
    for name in (
        "tracks.csv",
        "frame_stats.csv",
        "fd_bins.csv",
        "fd_fit.csv",
        "speed_density.svg",
        "detections.csv",
        "ground_truth.csv",
    ):
        assert name in manifest["files"]
        assert (out / name).exists()
    assert manifest["seed"] == 0
    assert manifest["config"]["camera.fps"] == 25.0
    assert "run complete" in capsys.readouterr().out


def test_run_rejects_conflicting_cameras(scenario_path, tmp_path, capsys):
    other = tmp_path / "other.cfg"
    other.write_text(CONFIG.replace("camera.altitude_m = 200.0", "camera.altitude_m = 150.0"), encoding="utf-8")
    code = main(["run", "--scenario", str(scenario_path), "--config", str(other), "--out", str(tmp_path / "o")])
    assert code == 2
    assert "camera block" in capsys.readouterr().err


def test_run_writes_only_inside_output_directory(scenario_path, tmp_path):
    out = tmp_path / "only"
    before = {p for p in tmp_path.iterdir()}
    main(["run", "--scenario", str(scenario_path), "--out", str(out)])
    after = {p for p in tmp_path.iterdir()}
    assert after - before == {out}


def test_fd_from_frame_stats(scenario_path, tmp_path):
    out = tmp_path / "out"
    congested = SCENARIO.replace("scenario.duration_frames = 120", "scenario.duration_frames = 1500").replace(
        "scenario.v0_kmh = 36.0",
        "scenario.speed_law = greenshields\nscenario.vf_kmh = 100.0\nscenario.kj_veh_per_km = 100.0",
    ) + "scenario.arrival_rate_end_veh_s = 1.2\nscenario.min_headway_px = 500\n"
    scenario_path.write_text(congested, encoding="utf-8")
    assert main(["run", "--scenario", str(scenario_path), "--out", str(out)]) == 0

    cfg = tmp_path / "fd.cfg"
    cfg.write_text(CONFIG + "fd.model = greenshields\nfd.min_bin_count = 3\n", encoding="utf-8")
    fd_out = tmp_path / "fd"
    assert main(["fd", "--stats", str(out / "frame_stats.csv"), "--config", str(cfg), "--out", str(fd_out)]) == 0
    for name in ("fd_bins.csv", "fd_fit.csv", "speed_density.svg", "fundamental_diagram.svg"):
        assert (fd_out / name).exists()
    fit_text = (fd_out / "fd_fit.csv").read_text(encoding="utf-8")
    assert "model,greenshields" in fit_text

    fd_out2 = tmp_path / "fd2"
    assert main(["fd", "--stats", str(out / "frame_stats.csv"), "--config", str(cfg), "--out", str(fd_out2)]) == 0
    assert read_all_bytes(fd_out) == read_all_bytes(fd_out2)


def test_fd_single_frame_reports_fit_error(config_path, tmp_path, capsys):
    stats = tmp_path / "frame_stats.csv"
    stats.write_text(
        "frame,timestamp_s,vehicle_count,density_veh_per_km,mean_speed_kmh,inflow,outflow\n"
        "0,0,3,23.0769,50,0,0\n",
        encoding="utf-8",
    )
    code = main(["fd", "--stats", str(stats), "--config", str(config_path), "--out", str(tmp_path / "o")])
    assert code == 2
    assert "bins" in capsys.readouterr().err


def test_eval_of_perfect_tracks(scenario_path, config_path, tmp_path, capsys):
    out = tmp_path / "out"
    main(["run", "--scenario", str(scenario_path), "--config", str(config_path), "--out", str(out), "--quiet"])
    code = main(
        ["eval", "--truth", str(out / "ground_truth.csv"), "--out", str(out), "--config", str(config_path)]
    )
    assert code == 0
    printed = capsys.readouterr().out
    assert "id_switches 0" in printed
    assert "track_purity 1" in printed
    payload = json.loads((out / "eval.json").read_text(encoding="utf-8"))
    assert payload["track_purity"] == 1.0
    assert payload["id_switches"] == 0


def test_run_twice_byte_identical(scenario_path, config_path, tmp_path):
    out1, out2 = tmp_path / "r1", tmp_path / "r2"
    main(["run", "--scenario", str(scenario_path), "--config", str(config_path), "--out", str(out1), "--quiet"])
    main(["run", "--scenario", str(scenario_path), "--config", str(config_path), "--out", str(out2), "--quiet"])
    assert read_all_bytes(out1) == read_all_bytes(out2)


def test_version_flag(capsys):
    assert main(["--version"]) == 0
    assert "trafficfd" in capsys.readouterr().out
