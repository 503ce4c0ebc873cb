"""Shared domain types for the tracking and traffic-analysis pipeline.

Image coordinates follow the usual convention: x grows rightward, y grows
downward, so "top" of the frame is decreasing y. Boxes are axis-aligned and
stored as (left, top, width, height) in pixels.
"""

import enum
import math
from dataclasses import dataclass, field
from typing import TYPE_CHECKING

if TYPE_CHECKING:
    from .kalman import KalmanState


@dataclass(frozen=True, slots=True)
class BoundingBox:
    """Axis-aligned pixel box; (x, y) is the top-left corner."""

    x: float
    y: float
    w: float
    h: float

    def __post_init__(self) -> None:
        if not (math.isfinite(self.x) and math.isfinite(self.y)):
            raise ValueError(f"box corner must be finite, got ({self.x}, {self.y})")
        if not (self.w > 0 and self.h > 0 and math.isfinite(self.w) and math.isfinite(self.h)):
            raise ValueError(f"box size must be positive, got ({self.w}, {self.h})")


def box_center(box: BoundingBox) -> tuple[float, float]:
    return (box.x + box.w / 2.0, box.y + box.h / 2.0)


@dataclass(frozen=True, slots=True)
class Detection:
    """A single detector output on one frame."""

    frame: int
    box: BoundingBox
    confidence: float
    class_id: int = 0

    def __post_init__(self) -> None:
        if not 0.0 <= self.confidence <= 1.0:
            raise ValueError(f"confidence must be in [0, 1], got {self.confidence}")
        if self.frame < 0:
            raise ValueError(f"frame must be non-negative, got {self.frame}")


@dataclass(frozen=True, slots=True)
class CameraModel:
    """Fixed nadir camera intrinsics plus flight altitude.

    Millimetres for the optics, metres for altitude, pixels for the sensor
    grid. Validation lives in :func:`validate_config` so that out-of-range
    values can still be constructed and reported.
    """

    focal_length_mm: float
    sensor_height_mm: float
    sensor_width_mm: float
    altitude_m: float
    image_width_px: int
    image_height_px: int
    fps: float


@dataclass(frozen=True, slots=True)
class TrackerConfig:
    """Tunable tracker parameters; see :func:`validate_config` for ranges."""

    iou_threshold: float = 0.3
    max_miss_frames: int = 25
    velocity_window: int = 25
    min_hits_to_confirm: int = 3
    motion_model_window: int = 5


class TrackStatus(enum.Enum):
    TENTATIVE = "tentative"
    ACTIVE = "active"
    COASTING = "coasting"
    REMOVED = "removed"


@dataclass(slots=True)
class TrackEntry:
    """One per-frame history sample of a track.

    ``observed`` is False for entries synthesised while the vehicle was
    occluded (coasting on the motion model).
    """

    frame: int
    box: BoundingBox
    observed: bool


@dataclass(slots=True)
class Track:
    """Mutable tracker-side state for one vehicle hypothesis."""

    id: int
    status: TrackStatus
    kalman: "KalmanState"
    boxes: list[TrackEntry] = field(default_factory=list)
    velocity_kmh: float | None = None
    direction: str | None = None
    miss_count: int = 0
    hits: int = 1

    def last_entry(self) -> TrackEntry:
        return self.boxes[-1]

    def last_center(self) -> tuple[float, float]:
        return box_center(self.boxes[-1].box)


@dataclass(frozen=True, slots=True)
class TrackRecord:
    """One exported row: where a track was on one frame and how it moved."""

    track_id: int
    frame: int
    timestamp_s: float
    center_x: float
    center_y: float
    velocity_kmh: float | None
    direction: str | None
    observed: bool


def validate_config(cfg: TrackerConfig, cam: CameraModel) -> list[str]:
    """Return a list of human-readable violations; empty means valid."""

    problems: list[str] = []

    def _finite_pos(name: str, value: float) -> None:
        if not (isinstance(value, (int, float)) and math.isfinite(value) and value > 0):
            problems.append(f"camera.{name}: must be a positive finite number, got {value!r}")

    _finite_pos("focal_length_mm", cam.focal_length_mm)
    _finite_pos("sensor_height_mm", cam.sensor_height_mm)
    _finite_pos("sensor_width_mm", cam.sensor_width_mm)
    _finite_pos("altitude_m", cam.altitude_m)
    _finite_pos("fps", cam.fps)
    if not (isinstance(cam.image_width_px, int) and cam.image_width_px > 0):
        problems.append(f"camera.image_width_px: must be a positive integer, got {cam.image_width_px!r}")
    if not (isinstance(cam.image_height_px, int) and cam.image_height_px > 0):
        problems.append(f"camera.image_height_px: must be a positive integer, got {cam.image_height_px!r}")

    if not (isinstance(cfg.iou_threshold, float) and 0.0 < cfg.iou_threshold < 1.0):
        problems.append(f"tracker.iou_threshold: must be strictly between 0 and 1, got {cfg.iou_threshold!r}")
    if not (isinstance(cfg.max_miss_frames, int) and cfg.max_miss_frames >= 0):
        problems.append(f"tracker.max_miss_frames: must be an integer >= 0, got {cfg.max_miss_frames!r}")
    if not (isinstance(cfg.velocity_window, int) and cfg.velocity_window >= 2):
        problems.append(f"tracker.velocity_window: must be an integer >= 2, got {cfg.velocity_window!r}")
    if not (isinstance(cfg.min_hits_to_confirm, int) and cfg.min_hits_to_confirm >= 1):
        problems.append(f"tracker.min_hits_to_confirm: must be an integer >= 1, got {cfg.min_hits_to_confirm!r}")
    if not (isinstance(cfg.motion_model_window, int) and cfg.motion_model_window >= 2):
        problems.append(f"tracker.motion_model_window: must be an integer >= 2, got {cfg.motion_model_window!r}")

    return problems
