"""File formats: detection CSV, key-value configs, and all pipeline exports.

Detection streams use the common multi-object-tracking CSV layout
``frame,id,bb_left,bb_top,bb_width,bb_height,conf,class`` (header optional),
so existing detector dumps plug in directly. Ground truth uses the identical
layout with real vehicle ids in the id column.

Configuration is a plain-text ``key = value`` file with dotted key names;
the full key reference lives in the README. Unknown keys are rejected with
a nearest-match suggestion so typos fail loudly instead of silently falling
back to defaults.

All numeric output is written with 6 significant digits and a locale
independent decimal point. Plots are SVG with a pinned hash salt and no
embedded date, so identical inputs produce byte-identical files.
"""

import csv
import difflib
import json
import math
import re
from dataclasses import dataclass
from pathlib import Path
from typing import IO, Iterator

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402  (backend must be pinned first)

from . import __version__
from .fd import AXIS_MODES, FdBin, FdCurve, FdSample, FdSettings, samples_from_stats
from .model import BoundingBox, CameraModel, Detection, TrackerConfig, TrackRecord, validate_config
from .sim import LaneSpec, OcclusionZone, ScenarioConfig, TruthBox
from .stats import CountingLine, FrameStats

plt.rcParams["svg.hashsalt"] = "trafficfd"
_SVG_METADATA = {"Date": None}

DETECTION_COLUMNS = ("frame", "id", "bb_left", "bb_top", "bb_width", "bb_height", "conf", "class")
TRACKS_COLUMNS = (
    "track_id",
    "frame",
    "timestamp_s",
    "center_x",
    "center_y",
    "velocity_kmh",
    "direction",
    "observed",
)
FRAME_STATS_COLUMNS = (
    "frame",
    "timestamp_s",
    "vehicle_count",
    "density_veh_per_km",
    "mean_speed_kmh",
    "inflow",
    "outflow",
)
FD_BINS_COLUMNS = ("density", "mean_speed_kmh", "sample_count", "flux")
FD_FIT_COLUMNS = ("field", "value")


class DetectionParseError(ValueError):
    """Malformed detection CSV; message carries the offending line number."""


class ConfigError(ValueError):
    """Malformed or invalid configuration file."""


def format_number(value: float) -> str:
    """6 significant digits, plain decimal point, no exponent surprises."""

    return f"{value:.6g}"


@dataclass(frozen=True, slots=True)
class DetectionRow:
    """One detection CSV row; ``id`` is -1 when the source has no identity."""

    frame: int
    id: int
    bb_left: float
    bb_top: float
    bb_width: float
    bb_height: float
    conf: float
    class_id: int


@dataclass(slots=True)
class DetectionFile:
    """Parsed detection stream, ordered by frame."""

    rows: list[DetectionRow]

    def __len__(self) -> int:
        return len(self.rows)

    def frame_span(self) -> tuple[int, int] | None:
        if not self.rows:
            return None
        return (self.rows[0].frame, self.rows[-1].frame)

    def iter_frames(self) -> Iterator[tuple[int, list[Detection]]]:
        """Yield every frame in the file's span, including empty ones.

        Gaps in the stream matter to the tracker (they are missed frames),
        so iteration is contiguous from the first to the last frame seen.
        """

        span = self.frame_span()
        if span is None:
            return
        grouped: dict[int, list[Detection]] = {}
        for row in self.rows:
            grouped.setdefault(row.frame, []).append(
                Detection(
                    frame=row.frame,
                    box=BoundingBox(row.bb_left, row.bb_top, row.bb_width, row.bb_height),
                    confidence=row.conf,
                    class_id=row.class_id,
                )
            )
        for frame in range(span[0], span[1] + 1):
            yield frame, grouped.get(frame, [])


def _parse_detection_value(raw: str, column: str, kind: type, lineno: int) -> float | int:
    try:
        return kind(raw)
    except ValueError:
        raise DetectionParseError(
            f"line {lineno}: column {column!r} expects {kind.__name__}, got {raw!r}"
        ) from None


def parse_detections(source: str | Path | IO[str]) -> DetectionFile:
    """Parse a detection or ground-truth CSV.

    Accepts a path or an open text stream. The header row is optional.
    Frames must be non-decreasing; sizes must be positive; confidences must
    lie in [0, 1]. Violations name the line.
    """

    if isinstance(source, (str, Path)):
        with open(source, "r", encoding="utf-8", newline="") as handle:
            return parse_detections(handle)

    rows: list[DetectionRow] = []
    last_frame: int | None = None
    for lineno, record in enumerate(csv.reader(source), start=1):
        if not record or (len(record) == 1 and not record[0].strip()):
            continue
        first = record[0].strip()
        if lineno == 1 and not _is_number(first):
            expected = [c.lower() for c in DETECTION_COLUMNS]
            got = [c.strip().lower() for c in record]
            if got != list(expected):
                raise DetectionParseError(
                    f"line 1: unrecognized header {record!r}; expected {','.join(DETECTION_COLUMNS)}"
                )
            continue
        if len(record) != len(DETECTION_COLUMNS):
            raise DetectionParseError(
                f"line {lineno}: expected {len(DETECTION_COLUMNS)} columns, got {len(record)}"
            )
        frame = _parse_detection_value(record[0].strip(), "frame", int, lineno)
        det_id = _parse_detection_value(record[1].strip(), "id", int, lineno)
        left = _parse_detection_value(record[2].strip(), "bb_left", float, lineno)
        top = _parse_detection_value(record[3].strip(), "bb_top", float, lineno)
        width = _parse_detection_value(record[4].strip(), "bb_width", float, lineno)
        height = _parse_detection_value(record[5].strip(), "bb_height", float, lineno)
        conf = _parse_detection_value(record[6].strip(), "conf", float, lineno)
        class_id = _parse_detection_value(record[7].strip(), "class", int, lineno)

        if frame < 0:
            raise DetectionParseError(f"line {lineno}: column 'frame' must be >= 0, got {frame}")
        if last_frame is not None and frame < last_frame:
            raise DetectionParseError(
                f"line {lineno}: frames must be non-decreasing ({frame} after {last_frame})"
            )
        if width <= 0:
            raise DetectionParseError(f"line {lineno}: column 'bb_width' must be positive, got {width}")
        if height <= 0:
            raise DetectionParseError(f"line {lineno}: column 'bb_height' must be positive, got {height}")
        if not 0.0 <= conf <= 1.0:
            raise DetectionParseError(f"line {lineno}: column 'conf' must be in [0, 1], got {conf}")
        if not all(map(math.isfinite, (left, top, width, height, conf))):
            raise DetectionParseError(f"line {lineno}: non-finite value")

        rows.append(
            DetectionRow(
                frame=frame,
                id=det_id,
                bb_left=left,
                bb_top=top,
                bb_width=width,
                bb_height=height,
                conf=conf,
                class_id=class_id,
            )
        )
        last_frame = frame
    return DetectionFile(rows=rows)


def _is_number(token: str) -> bool:
    try:
        float(token)
    except ValueError:
        return False
    return True


def write_detections_csv(rows: list[DetectionRow], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(DETECTION_COLUMNS)
        for row in rows:
            writer.writerow(
                [
                    row.frame,
                    row.id,
                    format_number(row.bb_left),
                    format_number(row.bb_top),
                    format_number(row.bb_width),
                    format_number(row.bb_height),
                    format_number(row.conf),
                    row.class_id,
                ]
            )


def detection_rows_from_stream(detections: list[Detection]) -> list[DetectionRow]:
    return [
        DetectionRow(
            frame=d.frame,
            id=-1,
            bb_left=d.box.x,
            bb_top=d.box.y,
            bb_width=d.box.w,
            bb_height=d.box.h,
            conf=d.confidence,
            class_id=d.class_id,
        )
        for d in detections
    ]


def detection_rows_from_truth(truth: list[TruthBox]) -> list[DetectionRow]:
    return [
        DetectionRow(
            frame=t.frame,
            id=t.vehicle_id,
            bb_left=t.box.x,
            bb_top=t.box.y,
            bb_width=t.box.w,
            bb_height=t.box.h,
            conf=1.0,
            class_id=0,
        )
        for t in truth
    ]


def truth_boxes(det_file: DetectionFile) -> list[TruthBox]:
    """Reinterpret a parsed CSV as ground truth (ids must be real)."""

    out = []
    for row in det_file.rows:
        if row.id < 0:
            raise DetectionParseError(
                f"ground truth requires non-negative vehicle ids, got {row.id} on frame {row.frame}"
            )
        out.append(
            TruthBox(
                frame=row.frame,
                vehicle_id=row.id,
                box=BoundingBox(row.bb_left, row.bb_top, row.bb_width, row.bb_height),
            )
        )
    return out


# --- key-value configuration -------------------------------------------------

_CAMERA_KEYS = {
    "camera.focal_length_mm": float,
    "camera.sensor_height_mm": float,
    "camera.sensor_width_mm": float,
    "camera.altitude_m": float,
    "camera.image_width_px": int,
    "camera.image_height_px": int,
    "camera.fps": float,
}
_TRACKER_KEYS = {
    "tracker.iou_threshold": float,
    "tracker.max_miss_frames": int,
    "tracker.velocity_window": int,
    "tracker.min_hits_to_confirm": int,
    "tracker.motion_model_window": int,
}
_FD_KEYS = {
    "fd.bin_width": float,
    "fd.min_bin_count": int,
    "fd.model": str,
    "fd.axis_mode": str,
}
_SEGMENT_KEYS = {
    "segment.length_km": float,
    "segment.extent_px": float,
}
_LINE_KEY = re.compile(r"^lines\.(\d+)\.(x1|y1|x2|y2|positive_side)$")
_LINE_FIELD_TYPES = {"x1": float, "y1": float, "x2": float, "y2": float, "positive_side": str}

_SCENARIO_KEYS = {
    "scenario.seed": int,
    "scenario.duration_frames": int,
    "scenario.arrival_rate_veh_s": float,
    "scenario.arrival_rate_end_veh_s": float,
    "scenario.speed_law": str,
    "scenario.v0_kmh": float,
    "scenario.vf_kmh": float,
    "scenario.kj_veh_per_km": float,
    "scenario.box_w_px": float,
    "scenario.box_h_px": float,
    "scenario.box_jitter_px": float,
    "scenario.noise_sigma_px": float,
    "scenario.dropout": float,
    "scenario.fp_rate_per_frame": float,
    "scenario.seed_vehicles": int,
    "scenario.min_headway_px": float,
    "scenario.spawn_margin_px": float,
}
_LANE_KEY = re.compile(r"^lane\.(\d+)\.(y_px|direction)$")
_LANE_FIELD_TYPES = {"y_px": float, "direction": int}
_ZONE_KEY = re.compile(r"^occlusion\.(\d+)\.(x|y|w|h)$")


@dataclass(frozen=True, slots=True)
class RunConfig:
    """Everything a pipeline run needs besides the detection stream."""

    camera: CameraModel
    tracker: TrackerConfig
    fd: FdSettings
    lines: tuple[CountingLine, ...]
    segment_length_km: float | None
    segment_extent_px: float | None

    def resolve_segment_length_km(self, gsd_km_per_px: float) -> float:
        if self.segment_length_km is not None:
            return self.segment_length_km
        assert self.segment_extent_px is not None
        return self.segment_extent_px * gsd_km_per_px


def _read_kv(path: str | Path) -> list[tuple[int, str, str]]:
    entries = []
    seen: dict[str, int] = {}
    with open(path, "r", encoding="utf-8") as handle:
        for lineno, raw in enumerate(handle, start=1):
            stripped = raw.strip()
            if not stripped or stripped.startswith("#"):
                continue
            if "=" not in stripped:
                raise ConfigError(f"{path}:{lineno}: expected 'key = value', got {stripped!r}")
            key, _, value = stripped.partition("=")
            key = key.strip()
            value = value.strip()
            if not key or not value:
                raise ConfigError(f"{path}:{lineno}: empty key or value")
            if key in seen:
                raise ConfigError(f"{path}:{lineno}: duplicate key {key!r} (first at line {seen[key]})")
            seen[key] = lineno
            entries.append((lineno, key, value))
    return entries


def _coerce(path: str | Path, lineno: int, key: str, value: str, kind: type):
    try:
        if kind is int:
            return int(value)
        if kind is float:
            result = float(value)
            if not math.isfinite(result):
                raise ValueError
            return result
        return value
    except ValueError:
        raise ConfigError(
            f"{path}:{lineno}: key {key!r} expects {kind.__name__}, got {value!r}"
        ) from None


def _unknown_key_error(path: str | Path, lineno: int, key: str, known: list[str]) -> ConfigError:
    suggestion = difflib.get_close_matches(key, known, n=1, cutoff=0.5)
    hint = f"; did you mean {suggestion[0]!r}?" if suggestion else ""
    return ConfigError(f"{path}:{lineno}: unknown key {key!r}{hint}")


def load_config(path: str | Path) -> RunConfig:
    """Load and validate a run configuration.

    The camera block is mandatory. Tracker and fd blocks fall back to their
    defaults. When neither segment key is given, the segment extent defaults
    to the full image width.
    """

    flat_known = {**_CAMERA_KEYS, **_TRACKER_KEYS, **_FD_KEYS, **_SEGMENT_KEYS}
    suggestions = list(flat_known) + ["lines.0.x1", "lines.0.y1", "lines.0.x2", "lines.0.y2", "lines.0.positive_side"]

    values: dict[str, object] = {}
    line_fields: dict[int, dict[str, object]] = {}
    for lineno, key, raw in _read_kv(path):
        match = _LINE_KEY.match(key)
        if match:
            index = int(match.group(1))
            fieldname = match.group(2)
            kind = _LINE_FIELD_TYPES[fieldname]
            line_fields.setdefault(index, {})[fieldname] = _coerce(path, lineno, key, raw, kind)
            continue
        if key not in flat_known:
            raise _unknown_key_error(path, lineno, key, suggestions)
        values[key] = _coerce(path, lineno, key, raw, flat_known[key])

    missing = [k for k in _CAMERA_KEYS if k not in values]
    if missing:
        raise ConfigError(f"{path}: missing mandatory camera keys: {', '.join(sorted(missing))}")

    camera = CameraModel(
        focal_length_mm=values["camera.focal_length_mm"],
        sensor_height_mm=values["camera.sensor_height_mm"],
        sensor_width_mm=values["camera.sensor_width_mm"],
        altitude_m=values["camera.altitude_m"],
        image_width_px=values["camera.image_width_px"],
        image_height_px=values["camera.image_height_px"],
        fps=values["camera.fps"],
    )
    defaults = TrackerConfig()
    tracker = TrackerConfig(
        iou_threshold=values.get("tracker.iou_threshold", defaults.iou_threshold),
        max_miss_frames=values.get("tracker.max_miss_frames", defaults.max_miss_frames),
        velocity_window=values.get("tracker.velocity_window", defaults.velocity_window),
        min_hits_to_confirm=values.get("tracker.min_hits_to_confirm", defaults.min_hits_to_confirm),
        motion_model_window=values.get("tracker.motion_model_window", defaults.motion_model_window),
    )
    problems = validate_config(tracker, camera)
    if problems:
        raise ConfigError(f"{path}: " + "; ".join(problems))

    fd_defaults = FdSettings()
    try:
        fd_settings = FdSettings(
            bin_width=values.get("fd.bin_width"),
            min_bin_count=values.get("fd.min_bin_count", fd_defaults.min_bin_count),
            model=values.get("fd.model", fd_defaults.model),
            axis_mode=values.get("fd.axis_mode", fd_defaults.axis_mode),
        )
    except ValueError as exc:
        raise ConfigError(f"{path}: {exc}") from None

    length_km = values.get("segment.length_km")
    extent_px = values.get("segment.extent_px")
    if length_km is not None and extent_px is not None:
        raise ConfigError(f"{path}: give segment.length_km or segment.extent_px, not both")
    if length_km is not None and length_km <= 0:
        raise ConfigError(f"{path}: segment.length_km must be positive, got {length_km}")
    if extent_px is not None and extent_px <= 0:
        raise ConfigError(f"{path}: segment.extent_px must be positive, got {extent_px}")
    if length_km is None and extent_px is None:
        extent_px = float(camera.image_width_px)

    lines = []
    for index in sorted(line_fields):
        fields = line_fields[index]
        missing_fields = [f for f in _LINE_FIELD_TYPES if f not in fields]
        if missing_fields:
            raise ConfigError(
                f"{path}: counting line {index} is missing {', '.join(sorted(missing_fields))}"
            )
        try:
            lines.append(
                CountingLine(
                    name=str(index),
                    p1=(fields["x1"], fields["y1"]),
                    p2=(fields["x2"], fields["y2"]),
                    positive_side=fields["positive_side"],
                )
            )
        except ValueError as exc:
            raise ConfigError(f"{path}: counting line {index}: {exc}") from None

    return RunConfig(
        camera=camera,
        tracker=tracker,
        fd=fd_settings,
        lines=tuple(lines),
        segment_length_km=length_km,
        segment_extent_px=extent_px,
    )


def load_scenario(path: str | Path) -> ScenarioConfig:
    """Load a simulator scenario (camera block plus scenario/lane/occlusion keys)."""

    flat_known = {**_CAMERA_KEYS, **_SCENARIO_KEYS}
    suggestions = list(flat_known) + ["lane.0.y_px", "lane.0.direction", "occlusion.0.x", "occlusion.0.y", "occlusion.0.w", "occlusion.0.h"]

    values: dict[str, object] = {}
    lane_fields: dict[int, dict[str, object]] = {}
    zone_fields: dict[int, dict[str, float]] = {}
    for lineno, key, raw in _read_kv(path):
        lane_match = _LANE_KEY.match(key)
        if lane_match:
            index = int(lane_match.group(1))
            fieldname = lane_match.group(2)
            kind = _LANE_FIELD_TYPES[fieldname]
            lane_fields.setdefault(index, {})[fieldname] = _coerce(path, lineno, key, raw, kind)
            continue
        zone_match = _ZONE_KEY.match(key)
        if zone_match:
            index = int(zone_match.group(1))
            fieldname = zone_match.group(2)
            zone_fields.setdefault(index, {})[fieldname] = _coerce(path, lineno, key, raw, float)
            continue
        if key not in flat_known:
            raise _unknown_key_error(path, lineno, key, suggestions)
        values[key] = _coerce(path, lineno, key, raw, flat_known[key])

    missing = [k for k in _CAMERA_KEYS if k not in values]
    if missing:
        raise ConfigError(f"{path}: missing mandatory camera keys: {', '.join(sorted(missing))}")
    if "scenario.duration_frames" not in values:
        raise ConfigError(f"{path}: missing mandatory key scenario.duration_frames")
    if not lane_fields:
        raise ConfigError(f"{path}: at least one lane.N block is required")

    camera = CameraModel(
        focal_length_mm=values["camera.focal_length_mm"],
        sensor_height_mm=values["camera.sensor_height_mm"],
        sensor_width_mm=values["camera.sensor_width_mm"],
        altitude_m=values["camera.altitude_m"],
        image_width_px=values["camera.image_width_px"],
        image_height_px=values["camera.image_height_px"],
        fps=values["camera.fps"],
    )
    problems = validate_config(TrackerConfig(), camera)
    if problems:
        raise ConfigError(f"{path}: " + "; ".join(problems))

    lanes = []
    for index in sorted(lane_fields):
        fields = lane_fields[index]
        missing_fields = [f for f in _LANE_FIELD_TYPES if f not in fields]
        if missing_fields:
            raise ConfigError(f"{path}: lane {index} is missing {', '.join(sorted(missing_fields))}")
        try:
            lanes.append(LaneSpec(y_px=fields["y_px"], direction=fields["direction"]))
        except ValueError as exc:
            raise ConfigError(f"{path}: lane {index}: {exc}") from None

    zones = []
    for index in sorted(zone_fields):
        fields = zone_fields[index]
        missing_fields = [f for f in ("x", "y", "w", "h") if f not in fields]
        if missing_fields:
            raise ConfigError(
                f"{path}: occlusion zone {index} is missing {', '.join(sorted(missing_fields))}"
            )
        try:
            zones.append(OcclusionZone(x=fields["x"], y=fields["y"], w=fields["w"], h=fields["h"]))
        except ValueError as exc:
            raise ConfigError(f"{path}: occlusion zone {index}: {exc}") from None

    kwargs = {}
    for key, value in values.items():
        if key.startswith("scenario."):
            name = key.removeprefix("scenario.")
            if name == "fp_rate_per_frame":
                kwargs["fp_rate_per_frame"] = value
            else:
                kwargs[name] = value

    try:
        return ScenarioConfig(
            camera=camera,
            lanes=tuple(lanes),
            occlusion_zones=tuple(zones),
            **kwargs,
        )
    except ValueError as exc:
        raise ConfigError(f"{path}: {exc}") from None


def config_echo(cfg: RunConfig) -> dict[str, object]:
    """Effective configuration as the flat key map the manifest embeds."""

    echo: dict[str, object] = {
        "camera.focal_length_mm": cfg.camera.focal_length_mm,
        "camera.sensor_height_mm": cfg.camera.sensor_height_mm,
        "camera.sensor_width_mm": cfg.camera.sensor_width_mm,
        "camera.altitude_m": cfg.camera.altitude_m,
        "camera.image_width_px": cfg.camera.image_width_px,
        "camera.image_height_px": cfg.camera.image_height_px,
        "camera.fps": cfg.camera.fps,
        "tracker.iou_threshold": cfg.tracker.iou_threshold,
        "tracker.max_miss_frames": cfg.tracker.max_miss_frames,
        "tracker.velocity_window": cfg.tracker.velocity_window,
        "tracker.min_hits_to_confirm": cfg.tracker.min_hits_to_confirm,
        "tracker.motion_model_window": cfg.tracker.motion_model_window,
        "fd.bin_width": cfg.fd.effective_bin_width(),
        "fd.min_bin_count": cfg.fd.min_bin_count,
        "fd.model": cfg.fd.model,
        "fd.axis_mode": cfg.fd.axis_mode,
    }
    if cfg.segment_length_km is not None:
        echo["segment.length_km"] = cfg.segment_length_km
    if cfg.segment_extent_px is not None:
        echo["segment.extent_px"] = cfg.segment_extent_px
    for line in cfg.lines:
        prefix = f"lines.{line.name}"
        echo[f"{prefix}.x1"] = line.p1[0]
        echo[f"{prefix}.y1"] = line.p1[1]
        echo[f"{prefix}.x2"] = line.p2[0]
        echo[f"{prefix}.y2"] = line.p2[1]
        echo[f"{prefix}.positive_side"] = line.positive_side
    return echo


# --- tabular exports ----------------------------------------------------------


def _fmt_optional(value: float | None) -> str:
    return "" if value is None else format_number(value)


def write_tracks_csv(records: list[TrackRecord], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(TRACKS_COLUMNS)
        for rec in records:
            writer.writerow(
                [
                    rec.track_id,
                    rec.frame,
                    format_number(rec.timestamp_s),
                    format_number(rec.center_x),
                    format_number(rec.center_y),
                    _fmt_optional(rec.velocity_kmh),
                    rec.direction or "",
                    int(rec.observed),
                ]
            )


def parse_tracks_csv(path: str | Path) -> list[TrackRecord]:
    records = []
    with open(path, "r", encoding="utf-8", newline="") as handle:
        reader = csv.DictReader(handle)
        if reader.fieldnames is None or tuple(reader.fieldnames) != TRACKS_COLUMNS:
            raise DetectionParseError(f"{path}: expected header {','.join(TRACKS_COLUMNS)}")
        for row in reader:
            records.append(
                TrackRecord(
                    track_id=int(row["track_id"]),
                    frame=int(row["frame"]),
                    timestamp_s=float(row["timestamp_s"]),
                    center_x=float(row["center_x"]),
                    center_y=float(row["center_y"]),
                    velocity_kmh=float(row["velocity_kmh"]) if row["velocity_kmh"] else None,
                    direction=row["direction"] or None,
                    observed=row["observed"] == "1",
                )
            )
    return records


def write_frame_stats_csv(stats: list[FrameStats], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(FRAME_STATS_COLUMNS)
        for s in stats:
            writer.writerow(
                [
                    s.frame,
                    format_number(s.timestamp_s),
                    s.vehicle_count,
                    format_number(s.density_veh_per_km),
                    _fmt_optional(s.mean_speed_kmh),
                    s.inflow,
                    s.outflow,
                ]
            )


def parse_frame_stats_csv(path: str | Path) -> list[FrameStats]:
    stats = []
    with open(path, "r", encoding="utf-8", newline="") as handle:
        reader = csv.DictReader(handle)
        if reader.fieldnames is None or tuple(reader.fieldnames) != FRAME_STATS_COLUMNS:
            raise DetectionParseError(f"{path}: expected header {','.join(FRAME_STATS_COLUMNS)}")
        for row in reader:
            stats.append(
                FrameStats(
                    frame=int(row["frame"]),
                    timestamp_s=float(row["timestamp_s"]),
                    vehicle_count=int(row["vehicle_count"]),
                    density_veh_per_km=float(row["density_veh_per_km"]),
                    mean_speed_kmh=float(row["mean_speed_kmh"]) if row["mean_speed_kmh"] else None,
                    inflow=int(row["inflow"]),
                    outflow=int(row["outflow"]),
                )
            )
    return stats


def write_fd_bins_csv(bins: list[FdBin], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(FD_BINS_COLUMNS)
        for b in bins:
            writer.writerow(
                [
                    format_number(b.density),
                    format_number(b.mean_speed),
                    b.count,
                    format_number(b.flux),
                ]
            )


def write_fd_fit_csv(curve: FdCurve | None, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(FD_FIT_COLUMNS)
        if curve is None:
            return
        fit = curve.fit
        writer.writerow(["model", fit.model])
        names = ("vf", "kj") if fit.model == "greenshields" else ("a", "b", "c")
        for name, value in zip(names, fit.coefficients):
            writer.writerow([name, "inf" if math.isinf(value) else format_number(value)])
        writer.writerow(["unbounded", int(fit.unbounded)])
        writer.writerow(["residual_norm", format_number(fit.residual_norm)])
        writer.writerow(["critical_density", format_number(curve.critical_density)])
        writer.writerow(["max_flux", format_number(curve.max_flux)])
        writer.writerow(["critical_range_low", format_number(curve.critical_range[0])])
        writer.writerow(["critical_range_high", format_number(curve.critical_range[1])])
        writer.writerow(["interior_maximum", int(curve.interior_maximum)])


# --- plots --------------------------------------------------------------------

_SPEED_LABEL = "mean speed (km/h)"


def _axis_labels(axis_mode: str) -> tuple[str, str]:
    if axis_mode == "count":
        return ("density (vehicles)", "flux (vehicles x km/h)")
    return ("density (veh/km)", "flux (veh/h)")


def render_speed_density_svg(
    samples: list[FdSample],
    curve: FdCurve | None,
    path: str | Path,
    axis_mode: str = "density",
) -> None:
    """Scatter of per-frame samples, bin means, and the fitted curve."""

    density_label, _ = _axis_labels(axis_mode)
    fig, ax = plt.subplots(figsize=(7.0, 5.0))
    any_series = False
    if samples:
        ax.scatter(
            [s.density for s in samples],
            [s.speed for s in samples],
            s=8,
            alpha=0.3,
            color="#4878a8",
            edgecolors="none",
            label="per-frame samples",
        )
        any_series = True
    if curve is not None and curve.bins:
        ax.plot(
            [b.density for b in curve.bins],
            [b.mean_speed for b in curve.bins],
            "o",
            color="#c8402a",
            label="bin means",
        )
        lo = curve.bins[0].density
        hi = curve.bins[-1].density
        ks = [lo + (hi - lo) * i / 199.0 for i in range(200)] if hi > lo else [lo]
        ax.plot(ks, [curve.fit.speed_at(k) for k in ks], "-", color="#2a8a4a", label="fitted curve")
        any_series = True
    ax.set_xlabel(density_label)
    ax.set_ylabel(_SPEED_LABEL)
    ax.set_title("Speed-density relationship")
    ax.grid(True, alpha=0.3)
    if any_series:
        ax.legend()
    fig.savefig(path, format="svg", metadata=_SVG_METADATA)
    plt.close(fig)


def render_fundamental_diagram_svg(
    curve: FdCurve,
    path: str | Path,
    axis_mode: str = "density",
) -> None:
    """Per-bin flux points, the fitted flux curve, and the critical density."""

    density_label, flux_label = _axis_labels(axis_mode)
    fig, ax = plt.subplots(figsize=(7.0, 5.0))
    ax.plot(
        [b.density for b in curve.bins],
        [b.flux for b in curve.bins],
        "o",
        color="#c8402a",
        label="bin flux",
    )
    lo = curve.bins[0].density
    hi = curve.bins[-1].density
    ks = [lo + (hi - lo) * i / 199.0 for i in range(200)] if hi > lo else [lo]
    ax.plot(ks, [k * curve.fit.speed_at(k) for k in ks], "-", color="#2a8a4a", label="fitted flux")
    ax.axvline(
        curve.critical_density,
        color="#555555",
        linestyle="--",
        label=f"critical density = {format_number(curve.critical_density)}",
    )
    ax.set_xlabel(density_label)
    ax.set_ylabel(flux_label)
    ax.set_title("Fundamental diagram")
    ax.grid(True, alpha=0.3)
    ax.legend()
    fig.savefig(path, format="svg", metadata=_SVG_METADATA)
    plt.close(fig)


def export_outputs(
    records: list[TrackRecord],
    stats: list[FrameStats],
    curve: FdCurve | None,
    out_dir: str | Path,
    *,
    axis_mode: str = "density",
    echo: dict[str, object] | None = None,
    seed: int | None = None,
    extra_files: list[str] | None = None,
    notes: list[str] | None = None,
) -> dict[str, object]:
    """Write every pipeline artifact into ``out_dir`` and return the manifest.

    The speed-density plot is always written (axes alone on empty input);
    the fundamental-diagram plot requires a fitted curve and is replaced by
    a manifest note when there is none. The manifest is also written as
    ``manifest.json``.
    """

    if axis_mode not in AXIS_MODES:
        raise ValueError(f"axis_mode must be one of {AXIS_MODES}, got {axis_mode!r}")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    all_notes = list(notes or [])
    files: list[str] = list(extra_files or [])

    write_tracks_csv(records, out / "tracks.csv")
    files.append("tracks.csv")
    write_frame_stats_csv(stats, out / "frame_stats.csv")
    files.append("frame_stats.csv")
    write_fd_bins_csv(list(curve.bins) if curve is not None else [], out / "fd_bins.csv")
    files.append("fd_bins.csv")
    write_fd_fit_csv(curve, out / "fd_fit.csv")
    files.append("fd_fit.csv")

    samples = samples_from_stats(stats, axis_mode)
    render_speed_density_svg(samples, curve, out / "speed_density.svg", axis_mode)
    files.append("speed_density.svg")
    if curve is not None:
        render_fundamental_diagram_svg(curve, out / "fundamental_diagram.svg", axis_mode)
        files.append("fundamental_diagram.svg")
    else:
        all_notes.append("no fundamental diagram: insufficient data for a speed-density fit")

    manifest: dict[str, object] = {
        "tool": "trafficfd",
        "version": __version__,
        "files": sorted(files),
        "notes": all_notes,
    }
    if echo is not None:
        manifest["config"] = echo
    if seed is not None:
        manifest["seed"] = seed
    with open(out / "manifest.json", "w", encoding="utf-8") as handle:
        json.dump(manifest, handle, indent=2, sort_keys=True)
        handle.write("\n")
    return manifest
