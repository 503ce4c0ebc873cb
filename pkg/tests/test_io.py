from __future__ import annotations

import io
import json
import math
import xml.etree.ElementTree as ElementTree
from pathlib import Path

import pytest

from trafficfd.fd import FdSample, bin_samples, fit_speed_density, fundamental_diagram
from trafficfd.io import (
    ConfigError,
    DetectionParseError,
    DetectionRow,
    config_echo,
    detection_rows_from_stream,
    detection_rows_from_truth,
    export_outputs,
    format_number,
    load_config,
    load_scenario,
    parse_detections,
    parse_frame_stats_csv,
    parse_tracks_csv,
    render_fundamental_diagram_svg,
    render_speed_density_svg,
    truth_boxes,
    write_detections_csv,
    write_fd_bins_csv,
    write_frame_stats_csv,
    write_tracks_csv,
)
from trafficfd.model import BoundingBox, Detection, TrackRecord
from trafficfd.sim import generate
from trafficfd.stats import FrameStats

CAMERA_BLOCK = """\
camera.focal_length_mm = 5.0
camera.sensor_height_mm = 1.8
camera.sensor_width_mm = 3.25
camera.altitude_m = 200.0
camera.image_width_px = 3250
camera.image_height_px = 1800
camera.fps = 25.0
"""


def write_config(tmp_path: Path, body: str, name: str = "run.cfg") -> Path:
    path = tmp_path / name
    path.write_text(body, encoding="utf-8")
    return path


def sample_curve():
    # offsets symmetric around each bin center, so bin means sit exactly on
    # the linear law and the fit recovers vf=100, kj=100
    pairs = [(c, off) for c in (7.5, 22.5, 37.5, 52.5, 67.5, 82.5) for off in (-0.5, 0.0, 0.5)]
    samples = [
        FdSample(density=c + off, speed=100.0 * (1.0 - (c + off) / 100.0), frame=i)
        for i, (c, off) in enumerate(pairs)
    ]
    bins = bin_samples(samples, 5.0, 2)
    fit = fit_speed_density(bins, "greenshields")
    return samples, fundamental_diagram(bins, fit, 5.0)


def test_parse_single_row():
    det = parse_detections(io.StringIO("1,-1,100,200,30,20,0.98,0\n"))
    assert len(det) == 1
    row = det.rows[0]
    assert (row.frame, row.id) == (1, -1)
    assert (row.bb_left, row.bb_top, row.bb_width, row.bb_height) == (100, 200, 30, 20)
    assert row.conf == 0.98
    assert row.class_id == 0


def test_parse_empty_file_is_empty_stream():
    det = parse_detections(io.StringIO(""))
    assert len(det) == 0
    assert det.frame_span() is None
    assert list(det.iter_frames()) == []


def test_parse_accepts_and_checks_header():
    det = parse_detections(io.StringIO("frame,id,bb_left,bb_top,bb_width,bb_height,conf,class\n1,-1,0,0,5,5,1,0\n"))
    assert len(det) == 1
    with pytest.raises(DetectionParseError, match="header"):
        parse_detections(io.StringIO("frame,id,left,top,w,h,conf,class\n"))


def test_parse_negative_width_names_line_and_column():
    with pytest.raises(DetectionParseError, match=r"line 2.*bb_width"):
        parse_detections(io.StringIO("1,-1,0,0,5,5,1,0\n2,-1,0,0,-5,5,1,0\n"))


def test_parse_rejects_short_rows():
    with pytest.raises(DetectionParseError, match="line 1"):
        parse_detections(io.StringIO("1,-1,0,0\n"))


def test_parse_rejects_non_numeric():
    with pytest.raises(DetectionParseError, match=r"line 1.*conf"):
        parse_detections(io.StringIO("1,-1,0,0,5,5,high,0\n"))


def test_parse_rejects_decreasing_frames():
    with pytest.raises(DetectionParseError, match="non-decreasing"):
        parse_detections(io.StringIO("3,-1,0,0,5,5,1,0\n2,-1,0,0,5,5,1,0\n"))


def test_parse_rejects_bad_confidence():
    with pytest.raises(DetectionParseError, match=r"conf"):
        parse_detections(io.StringIO("1,-1,0,0,5,5,1.2,0\n"))


def test_iter_frames_is_contiguous():
    det = parse_detections(io.StringIO("2,-1,0,0,5,5,1,0\n5,-1,10,0,5,5,1,0\n"))
    frames = list(det.iter_frames())
    assert [f for f, _ in frames] == [2, 3, 4, 5]
    assert [len(d) for _, d in frames] == [1, 0, 0, 1]
    assert all(isinstance(d, Detection) for _, dets in frames for d in dets)


def test_detections_round_trip(tmp_path):
    rows = [
        DetectionRow(0, -1, 10.25, 20.5, 30.0, 15.0, 0.875, 0),
        DetectionRow(0, -1, 50.0, 60.0, 20.0, 10.0, 1.0, 2),
        DetectionRow(3, -1, 11.5, 21.0, 30.0, 15.0, 0.5, 0),
    ]
    path = tmp_path / "dets.csv"
    write_detections_csv(rows, path)
    assert parse_detections(path).rows == rows


def test_truth_round_trip_through_csv(tmp_path):
    sc_truth, detections = generate_scenario_fixture()
    path = tmp_path / "truth.csv"
    write_detections_csv(detection_rows_from_truth(sc_truth), path)
    back = truth_boxes(parse_detections(path))
    assert len(back) == len(sc_truth)
    for a, b in zip(back, sc_truth):
        assert a.frame == b.frame and a.vehicle_id == b.vehicle_id
    stream_rows = detection_rows_from_stream(detections)
    assert all(r.id == -1 for r in stream_rows)


def generate_scenario_fixture():
    from trafficfd.model import CameraModel
    from trafficfd.sim import LaneSpec, ScenarioConfig

    sc = ScenarioConfig(
        camera=CameraModel(5.0, 1.8, 3.25, 200.0, 3250, 1800, 25.0),
        duration_frames=40,
        lanes=(LaneSpec(500.0, 1),),
        v0_kmh=36.0,
        seed_vehicles=1,
    )
    return generate(sc)


def test_truth_boxes_reject_anonymous_rows():
    det = parse_detections(io.StringIO("1,-1,0,0,5,5,1,0\n"))
    with pytest.raises(DetectionParseError, match="ids"):
        truth_boxes(det)


def test_load_config_minimal_applies_defaults(tmp_path):
    cfg = load_config(write_config(tmp_path, CAMERA_BLOCK))
    assert cfg.camera.altitude_m == 200.0
    assert cfg.tracker.iou_threshold == 0.3
    assert cfg.tracker.max_miss_frames == 25
    assert cfg.fd.model == "quadratic"
    assert cfg.lines == ()
    assert cfg.segment_length_km is None
    assert cfg.segment_extent_px == 3250.0
    # 3250 px at 4e-5 km/px
    assert cfg.resolve_segment_length_km(4e-5) == pytest.approx(0.13)


def test_load_config_rejects_bad_altitude(tmp_path):
    body = CAMERA_BLOCK.replace("camera.altitude_m = 200.0", "camera.altitude_m = -1")
    with pytest.raises(ConfigError, match="altitude_m"):
        load_config(write_config(tmp_path, body))


def test_load_config_suggests_near_miss_key(tmp_path):
    body = CAMERA_BLOCK + "tracker.iou_treshold = 0.4\n"
    with pytest.raises(ConfigError, match=r"iou_treshold.*iou_threshold"):
        load_config(write_config(tmp_path, body))


def test_load_config_requires_camera_block(tmp_path):
    with pytest.raises(ConfigError, match="camera"):
        load_config(write_config(tmp_path, "tracker.iou_threshold = 0.4\n"))


def test_load_config_rejects_both_segment_keys(tmp_path):
    body = CAMERA_BLOCK + "segment.length_km = 0.13\nsegment.extent_px = 3250\n"
    with pytest.raises(ConfigError, match="not both"):
        load_config(write_config(tmp_path, body))


def test_load_config_rejects_duplicate_keys(tmp_path):
    body = CAMERA_BLOCK + "tracker.iou_threshold = 0.4\ntracker.iou_threshold = 0.5\n"
    with pytest.raises(ConfigError, match="duplicate"):
        load_config(write_config(tmp_path, body))


def test_load_config_rejects_type_mismatch(tmp_path):
    body = CAMERA_BLOCK + "tracker.max_miss_frames = many\n"
    with pytest.raises(ConfigError, match="max_miss_frames.*int"):
        load_config(write_config(tmp_path, body))


def test_load_config_parses_lines_and_comments(tmp_path):
    body = CAMERA_BLOCK + (
        "# gates\n"
        "lines.0.x1 = 300\nlines.0.y1 = 0\nlines.0.x2 = 300\nlines.0.y2 = 1800\n"
        "lines.0.positive_side = left\n"
        "segment.length_km = 0.13\n"
    )
    cfg = load_config(write_config(tmp_path, body))
    assert len(cfg.lines) == 1
    assert cfg.lines[0].p1 == (300.0, 0.0)
    assert cfg.lines[0].positive_side == "left"
    assert cfg.resolve_segment_length_km(4e-5) == 0.13
    echo = config_echo(cfg)
    assert echo["lines.0.x1"] == 300.0
    assert echo["segment.length_km"] == 0.13


def test_load_config_flags_incomplete_line(tmp_path):
    body = CAMERA_BLOCK + "lines.0.x1 = 300\n"
    with pytest.raises(ConfigError, match="line 0 is missing"):
        load_config(write_config(tmp_path, body))


def test_load_scenario_round_trip(tmp_path):
    body = CAMERA_BLOCK + (
        "scenario.duration_frames = 200\n"
        "scenario.seed = 11\n"
        "scenario.v0_kmh = 36.0\n"
        "scenario.seed_vehicles = 1\n"
        "lane.0.y_px = 500\nlane.0.direction = 1\n"
        "occlusion.0.x = 1000\nocclusion.0.y = 0\nocclusion.0.w = 100\nocclusion.0.h = 1800\n"
    )
    sc = load_scenario(write_config(tmp_path, body, "scenario.cfg"))
    assert sc.duration_frames == 200
    assert sc.seed == 11
    assert sc.lanes[0].y_px == 500.0
    assert sc.occlusion_zones[0].w == 100.0
    truth, _ = generate(sc)
    assert truth


def test_load_scenario_requires_lane(tmp_path):
    body = CAMERA_BLOCK + "scenario.duration_frames = 10\n"
    with pytest.raises(ConfigError, match="lane"):
        load_scenario(write_config(tmp_path, body, "scenario.cfg"))


def test_tracks_csv_round_trip(tmp_path):
    records = [
        TrackRecord(0, 0, 0.0, 105.0, 105.0, None, None, True),
        TrackRecord(0, 1, 0.04, 110.5, 105.25, 36.0, "right", True),
        TrackRecord(1, 1, 0.04, 400.0, 205.0, 18.5, "left", False),
    ]
    path = tmp_path / "tracks.csv"
    write_tracks_csv(records, path)
    assert parse_tracks_csv(path) == records


def test_frame_stats_csv_round_trip(tmp_path):
    stats = [
        FrameStats(0, 0.0, 0, 0.0, None, 0, 0),
        FrameStats(1, 0.04, 13, 100.0, 42.5, 1, 0),
        FrameStats(2, 0.08, 12, 92.3076923076923, 40.25, 0, 1),
    ]
    path = tmp_path / "frame_stats.csv"
    write_frame_stats_csv(stats, path)
    back = parse_frame_stats_csv(path)
    assert len(back) == len(stats)
    for a, b in zip(back, stats):
        assert a.frame == b.frame
        assert a.vehicle_count == b.vehicle_count
        assert a.density_veh_per_km == pytest.approx(b.density_veh_per_km, rel=1e-5)
        if b.mean_speed_kmh is None:
            assert a.mean_speed_kmh is None
        else:
            assert a.mean_speed_kmh == pytest.approx(b.mean_speed_kmh, rel=1e-5)
        assert (a.inflow, a.outflow) == (b.inflow, b.outflow)


def test_fd_bins_csv_flux_column(tmp_path):
    _, curve = sample_curve()
    path = tmp_path / "fd_bins.csv"
    write_fd_bins_csv(list(curve.bins), path)
    lines = path.read_text(encoding="utf-8").strip().splitlines()
    assert lines[0] == "density,mean_speed_kmh,sample_count,flux"
    for line in lines[1:]:
        density, mean_speed, _, flux = line.split(",")
        # 6-significant-digit round trip keeps the identity to ~1e-5 relative
        assert float(flux) == pytest.approx(float(density) * float(mean_speed), rel=1e-4)


def test_format_number_six_significant_digits():
    assert format_number(92.3076923076923) == "92.3077"
    assert format_number(0.13) == "0.13"
    assert format_number(2500.0) == "2500"
    assert format_number(1.0 / 3.0) == "0.333333"


def test_speed_density_svg_well_formed(tmp_path):
    samples, curve = sample_curve()
    path = tmp_path / "speed_density.svg"
    render_speed_density_svg(samples, curve, path)
    root = ElementTree.parse(path).getroot()
    assert root.tag.endswith("svg")


def test_speed_density_svg_empty_case(tmp_path):
    path = tmp_path / "empty.svg"
    render_speed_density_svg([], None, path)
    root = ElementTree.parse(path).getroot()
    assert root.tag.endswith("svg")


def test_fundamental_diagram_svg_well_formed(tmp_path):
    _, curve = sample_curve()
    path = tmp_path / "fd.svg"
    render_fundamental_diagram_svg(curve, path)
    root = ElementTree.parse(path).getroot()
    assert root.tag.endswith("svg")


def test_export_outputs_full_set(tmp_path):
    samples, curve = sample_curve()
    stats = [FrameStats(0, 0.0, 13, 100.0, 42.5, 0, 0)]
    records = [TrackRecord(0, 0, 0.0, 105.0, 105.0, 36.0, "right", True)]
    manifest = export_outputs(records, stats, curve, tmp_path, seed=7, echo={"camera.fps": 25.0})
    expected = sorted(
        ["tracks.csv", "frame_stats.csv", "fd_bins.csv", "fd_fit.csv", "speed_density.svg", "fundamental_diagram.svg"]
    )
    assert manifest["files"] == expected
    assert manifest["seed"] == 7
    assert manifest["config"] == {"camera.fps": 25.0}
    for name in expected + ["manifest.json"]:
        assert (tmp_path / name).exists()
    on_disk = json.loads((tmp_path / "manifest.json").read_text(encoding="utf-8"))
    assert on_disk["files"] == expected
    assert on_disk["tool"] == "trafficfd"


def test_export_outputs_empty_inputs(tmp_path):
    manifest = export_outputs([], [], None, tmp_path)
    assert "fundamental_diagram.svg" not in manifest["files"]
    assert any("no fundamental diagram" in note for note in manifest["notes"])
    tracks = (tmp_path / "tracks.csv").read_text(encoding="utf-8").strip().splitlines()
    assert len(tracks) == 1
    root = ElementTree.parse(tmp_path / "speed_density.svg").getroot()
    assert root.tag.endswith("svg")


def test_fd_fit_csv_reports_model(tmp_path):
    _, curve = sample_curve()
    path = tmp_path / "fd_fit.csv"
    from trafficfd.io import write_fd_fit_csv

    write_fd_fit_csv(curve, path)
    text = path.read_text(encoding="utf-8")
    assert "model,greenshields" in text.replace("\r", "")
    assert "critical_density" in text
    kj_line = [l for l in text.splitlines() if l.startswith("kj,")][0]
    assert float(kj_line.split(",")[1]) == pytest.approx(100.0, rel=1e-4)


def test_renders_are_deterministic(tmp_path):
    samples, curve = sample_curve()
    a, b = tmp_path / "a.svg", tmp_path / "b.svg"
    render_speed_density_svg(samples, curve, a)
    render_speed_density_svg(samples, curve, b)
    assert a.read_bytes() == b.read_bytes()
