"""Per-frame traffic statistics: density, mean speed, and line crossings.

Counting lines are directed segments with a declared positive side; a track
whose center moves from the negative to the positive side between consecutive
frames is an inflow event, the reverse an outflow event. Vehicles already on
a line (side value exactly zero) are treated as having arrived on the
positive side, so a crossing is counted once and exactly once.
"""

import math
from dataclasses import dataclass

from .model import Track, TrackStatus

_SIDES = ("left", "right")


@dataclass(frozen=True, slots=True)
class CountingLine:
    """Directed virtual line; ``positive_side`` is viewed from p1 toward p2."""

    name: str
    p1: tuple[float, float]
    p2: tuple[float, float]
    positive_side: str

    def __post_init__(self) -> None:
        if self.p1 == self.p2:
            raise ValueError(f"counting line {self.name!r} endpoints must differ")
        if self.positive_side not in _SIDES:
            raise ValueError(
                f"counting line {self.name!r}: positive_side must be one of {_SIDES}, "
                f"got {self.positive_side!r}"
            )


def line_side(line: CountingLine, point: tuple[float, float]) -> float:
    """Signed side of ``point``: positive on the declared positive side.

    Left and right are relative to a walker going from p1 to p2. In image
    coordinates (y down) the cross product of (p2 - p1) with (point - p1)
    is positive for points on the walker's right.
    """

    ux = line.p2[0] - line.p1[0]
    uy = line.p2[1] - line.p1[1]
    vx = point[0] - line.p1[0]
    vy = point[1] - line.p1[1]
    cross = ux * vy - uy * vx
    return cross if line.positive_side == "right" else -cross


@dataclass(frozen=True, slots=True)
class FrameStats:
    """Traffic state of one frame."""

    frame: int
    timestamp_s: float
    vehicle_count: int
    density_veh_per_km: float
    mean_speed_kmh: float | None
    inflow: int
    outflow: int


def frame_stats(
    frame: int,
    tracks: list[Track],
    segment_length_km: float,
    lines: list[CountingLine],
    prev_positions: dict[int, tuple[float, float]],
    fps: float,
) -> FrameStats:
    """Summarize one frame of tracker output.

    ``prev_positions`` maps track id to the track's center on the previous
    frame; tracks absent from it (just spawned) cannot cross anything yet.
    Tentative tracks are excluded from the vehicle count but their crossings
    still register, so vehicles entering near a line are not lost.
    """

    if not (segment_length_km > 0):
        raise ValueError(f"segment_length_km must be positive, got {segment_length_km}")
    if not (fps > 0):
        raise ValueError(f"fps must be positive, got {fps}")

    counted = [t for t in tracks if t.status in (TrackStatus.ACTIVE, TrackStatus.COASTING)]
    speeds = [t.velocity_kmh for t in counted if t.velocity_kmh is not None]
    mean_speed = math.fsum(speeds) / len(speeds) if speeds else None

    inflow = 0
    outflow = 0
    for line in lines:
        for track in tracks:
            prev = prev_positions.get(track.id)
            if prev is None:
                continue
            before = line_side(line, prev)
            after = line_side(line, track.last_center())
            if before < 0 and after >= 0:
                inflow += 1
            elif before >= 0 and after < 0:
                outflow += 1

    return FrameStats(
        frame=frame,
        timestamp_s=frame / fps,
        vehicle_count=len(counted),
        density_veh_per_km=len(counted) / segment_length_km,
        mean_speed_kmh=mean_speed,
        inflow=inflow,
        outflow=outflow,
    )


def segment_length_from_gsd(image_extent_px: float, gsd_km_per_px: float) -> float:
    """Metric length of a pixel extent along the road axis."""

    if not (image_extent_px > 0 and gsd_km_per_px > 0):
        raise ValueError("image extent and gsd must both be positive")
    return image_extent_px * gsd_km_per_px
