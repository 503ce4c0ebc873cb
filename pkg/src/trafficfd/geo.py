"""Ground sample distance and pixel-to-metric conversion.

For a nadir-pointing camera the ground footprint of one pixel follows from
altitude, focal length, sensor size, and image size. Height and width give
independent estimates; the larger (coarser) one is kept as the conservative
scale and converted to km/px so downstream speeds come out in km/h.
"""

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

from .model import CameraModel

SECONDS_PER_HOUR = 3600.0


@dataclass(frozen=True, slots=True)
class GsdResult:
    """Per-axis ground sample distances (m/px) and the final scale (km/px)."""

    gsd_h_m_per_px: float
    gsd_w_m_per_px: float
    gsd_km_per_px: float


def compute_gsd(cam: CameraModel) -> GsdResult:
    """Ground sample distance from camera intrinsics and altitude.

    Altitude in metres, optics in millimetres: the mm terms cancel in the
    sensor/focal ratio, leaving m/px per axis. The final figure takes the
    larger axis and rescales to km/px.
    """

    if cam.focal_length_mm <= 0 or cam.image_height_px <= 0 or cam.image_width_px <= 0:
        raise ValueError("camera focal length and image size must be positive")
    gsd_h = cam.altitude_m * cam.sensor_height_mm / (cam.focal_length_mm * cam.image_height_px)
    gsd_w = cam.altitude_m * cam.sensor_width_mm / (cam.focal_length_mm * cam.image_width_px)
    return GsdResult(
        gsd_h_m_per_px=gsd_h,
        gsd_w_m_per_px=gsd_w,
        gsd_km_per_px=max(gsd_h, gsd_w) / 1000.0,
    )


def px_point_distance_km(
    p1: Sequence[float], p2: Sequence[float], gsd_km_per_px: float
) -> float:
    """Euclidean distance between two pixel points, scaled to kilometres."""

    return math.hypot(p2[0] - p1[0], p2[1] - p1[1]) * gsd_km_per_px


def track_velocity_kmh(
    displacements_px: Iterable[float],
    gsd_km_per_px: float,
    fps: float,
    frame_difference: int,
) -> float | None:
    """Mean speed in km/h over a window of per-frame pixel displacements.

    The displacements are summed to a path length in km, divided by the
    elapsed time (``frame_difference`` frames at ``fps``), and scaled from
    km/s to km/h. Returns None when the window is empty.
    """

    displacements = list(displacements_px)
    if not displacements:
        return None
    if frame_difference <= 0:
        raise ValueError(f"frame_difference must be positive, got {frame_difference}")
    if fps <= 0:
        raise ValueError(f"fps must be positive, got {fps}")
    path_km = math.fsum(displacements) * gsd_km_per_px
    return path_km * fps / frame_difference * SECONDS_PER_HOUR
