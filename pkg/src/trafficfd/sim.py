"""Synthetic straight-road scenes for exercising the tracking pipeline.

Vehicles are points with attached boxes moving along horizontal lanes at a
shared speed given by the configured law applied to the instantaneous
in-segment count. The detector model corrupts ground truth with center
jitter, dropouts, uniform false positives, and occlusion zones that withhold
detections entirely. Everything random flows from one seeded generator with
a fixed per-frame draw order: arrivals, lane choices, spawn sizes, per-truth
detection draws (in vehicle id order), then false positives.

The evaluator scores pipeline output against ground truth per vehicle-frame
by nearest-center matching, which for same-size boxes selects the same
record as a best-IoU rule would.
"""

import math
from dataclasses import dataclass

import numpy as np

from .fd import FdSettings, FitError, bin_samples, fit_speed_density, fundamental_diagram, samples_from_stats
from .geo import compute_gsd
from .model import BoundingBox, CameraModel, Detection, TrackRecord
from .stats import FrameStats

SPEED_LAWS = ("constant", "greenshields")


@dataclass(frozen=True, slots=True)
class LaneSpec:
    """Horizontal lane at a fixed y; direction +1 moves rightward, -1 left."""

    y_px: float
    direction: int

    def __post_init__(self) -> None:
        if self.direction not in (-1, 1):
            raise ValueError(f"lane direction must be +1 or -1, got {self.direction}")


@dataclass(frozen=True, slots=True)
class OcclusionZone:
    """Pixel rectangle inside which vehicle centers produce no detections."""

    x: float
    y: float
    w: float
    h: float

    def __post_init__(self) -> None:
        if not (self.w > 0 and self.h > 0):
            raise ValueError(f"occlusion zone size must be positive, got ({self.w}, {self.h})")

    def contains(self, point: tuple[float, float]) -> bool:
        return self.x <= point[0] < self.x + self.w and self.y <= point[1] < self.y + self.h


@dataclass(frozen=True, slots=True)
class ScenarioConfig:
    """Complete description of one synthetic scene."""

    camera: CameraModel
    duration_frames: int
    lanes: tuple[LaneSpec, ...]
    seed: int = 0
    arrival_rate_veh_s: float = 0.0
    arrival_rate_end_veh_s: float | None = None
    speed_law: str = "constant"
    v0_kmh: float = 50.0
    vf_kmh: float = 100.0
    kj_veh_per_km: float = 100.0
    box_w_px: float = 64.0
    box_h_px: float = 32.0
    box_jitter_px: float = 0.0
    noise_sigma_px: float = 0.0
    dropout: float = 0.0
    fp_rate_per_frame: float = 0.0
    occlusion_zones: tuple[OcclusionZone, ...] = ()
    seed_vehicles: int = 0
    min_headway_px: float = 150.0
    spawn_margin_px: float = 200.0

    def __post_init__(self) -> None:
        problems = []
        if self.duration_frames < 1:
            problems.append(f"duration_frames must be >= 1, got {self.duration_frames}")
        if not self.lanes:
            problems.append("at least one lane is required")
        for i, lane in enumerate(self.lanes):
            if not 0 <= lane.y_px <= self.camera.image_height_px:
                problems.append(f"lane {i} y={lane.y_px} outside image height {self.camera.image_height_px}")
        if self.speed_law not in SPEED_LAWS:
            problems.append(f"speed_law must be one of {SPEED_LAWS}, got {self.speed_law!r}")
        if not (0.0 <= self.dropout <= 1.0):
            problems.append(f"dropout must be in [0, 1], got {self.dropout}")
        if self.noise_sigma_px < 0:
            problems.append(f"noise_sigma_px must be >= 0, got {self.noise_sigma_px}")
        if self.fp_rate_per_frame < 0:
            problems.append(f"fp_rate_per_frame must be >= 0, got {self.fp_rate_per_frame}")
        if self.arrival_rate_veh_s < 0:
            problems.append(f"arrival_rate_veh_s must be >= 0, got {self.arrival_rate_veh_s}")
        if self.arrival_rate_end_veh_s is not None and self.arrival_rate_end_veh_s < 0:
            problems.append(f"arrival_rate_end_veh_s must be >= 0, got {self.arrival_rate_end_veh_s}")
        if self.v0_kmh <= 0 or self.vf_kmh <= 0 or self.kj_veh_per_km <= 0:
            problems.append("speed-law parameters must be positive")
        if self.box_w_px <= 0 or self.box_h_px <= 0:
            problems.append("box size must be positive")
        if self.box_jitter_px < 0:
            problems.append(f"box_jitter_px must be >= 0, got {self.box_jitter_px}")
        if self.seed_vehicles < 0:
            problems.append(f"seed_vehicles must be >= 0, got {self.seed_vehicles}")
        if self.min_headway_px <= 0 or self.spawn_margin_px < 0:
            problems.append("min_headway_px must be positive and spawn_margin_px non-negative")
        if problems:
            raise ValueError("invalid scenario: " + "; ".join(problems))


@dataclass(frozen=True, slots=True)
class TruthBox:
    """Ground-truth presence of one vehicle on one frame."""

    frame: int
    vehicle_id: int
    box: BoundingBox


@dataclass(frozen=True, slots=True)
class EvalReport:
    """Pipeline quality against ground truth; None where not computable."""

    id_switches: int
    track_purity: float
    velocity_rmse_kmh: float | None
    density_mae: float | None
    fd_param_errors: tuple[float, float] | None


@dataclass(slots=True)
class _Vehicle:
    id: int
    lane: int
    x: float
    w: float
    h: float


def _law_speed_kmh(sc: ScenarioConfig, in_segment: int, segment_length_km: float) -> float:
    if sc.speed_law == "constant":
        return sc.v0_kmh
    density = in_segment / segment_length_km
    return min(max(sc.vf_kmh * (1.0 - density / sc.kj_veh_per_km), 0.0), sc.vf_kmh)


def generate(sc: ScenarioConfig) -> tuple[list[TruthBox], list[Detection]]:
    """Run the scenario and return (ground truth rows, detection stream).

    Both lists are ordered by frame, then vehicle id (detections keep the
    truth order they were derived from, with false positives appended last
    per frame).
    """

    rng = np.random.default_rng(sc.seed)
    cam = sc.camera
    width = float(cam.image_width_px)
    gsd_km_per_px = compute_gsd(cam).gsd_km_per_px
    m_per_px = gsd_km_per_px * 1000.0
    segment_length_km = width * gsd_km_per_px

    vehicles: list[_Vehicle] = []
    pending = [0] * len(sc.lanes)
    next_vehicle_id = 0

    def entry_x(lane: LaneSpec) -> float:
        return 0.0 if lane.direction > 0 else width

    def entry_clear(lane_index: int, x0: float) -> bool:
        return all(
            abs(v.x - x0) >= sc.min_headway_px
            for v in vehicles
            if v.lane == lane_index
        )

    def spawn(lane_index: int, x0: float) -> None:
        nonlocal next_vehicle_id
        w = max(sc.box_w_px + rng.normal(0.0, sc.box_jitter_px), 4.0) if sc.box_jitter_px else sc.box_w_px
        h = max(sc.box_h_px + rng.normal(0.0, sc.box_jitter_px), 4.0) if sc.box_jitter_px else sc.box_h_px
        vehicles.append(_Vehicle(id=next_vehicle_id, lane=lane_index, x=x0, w=w, h=h))
        next_vehicle_id += 1

    for i in range(sc.seed_vehicles):
        lane_index = i % len(sc.lanes)
        lane = sc.lanes[lane_index]
        offset = (i // len(sc.lanes)) * 2.0 * sc.min_headway_px
        spawn(lane_index, entry_x(lane) - lane.direction * offset)

    truth: list[TruthBox] = []
    detections: list[Detection] = []

    for frame in range(sc.duration_frames):
        if sc.arrival_rate_end_veh_s is None or sc.duration_frames == 1:
            rate = sc.arrival_rate_veh_s
        else:
            ramp = frame / (sc.duration_frames - 1)
            rate = sc.arrival_rate_veh_s + ramp * (sc.arrival_rate_end_veh_s - sc.arrival_rate_veh_s)
        arrivals = int(rng.poisson(rate / cam.fps)) if rate > 0 else 0
        for lane_index in rng.integers(0, len(sc.lanes), size=arrivals):
            pending[int(lane_index)] += 1

        in_segment = sum(1 for v in vehicles if 0.0 <= v.x <= width)
        speed_kmh = _law_speed_kmh(sc, in_segment, segment_length_km)
        step_px = speed_kmh / 3.6 / cam.fps / m_per_px

        for lane_index, lane in enumerate(sc.lanes):
            x0 = entry_x(lane)
            while pending[lane_index] > 0 and entry_clear(lane_index, x0):
                spawn(lane_index, x0)
                pending[lane_index] -= 1

        for v in vehicles:
            v.x += sc.lanes[v.lane].direction * step_px

        frame_truth: list[TruthBox] = []
        for v in vehicles:
            if 0.0 <= v.x <= width:
                lane = sc.lanes[v.lane]
                box = BoundingBox(v.x - v.w / 2.0, lane.y_px - v.h / 2.0, v.w, v.h)
                frame_truth.append(TruthBox(frame=frame, vehicle_id=v.id, box=box))
        truth.extend(frame_truth)

        for row in frame_truth:
            center = (row.box.x + row.box.w / 2.0, row.box.y + row.box.h / 2.0)
            if any(zone.contains(center) for zone in sc.occlusion_zones):
                continue
            if sc.dropout > 0 and rng.random() < sc.dropout:
                continue
            if sc.noise_sigma_px > 0:
                jitter = rng.normal(0.0, sc.noise_sigma_px, size=2)
                box = BoundingBox(row.box.x + jitter[0], row.box.y + jitter[1], row.box.w, row.box.h)
            else:
                box = row.box
            detections.append(
                Detection(frame=frame, box=box, confidence=float(rng.uniform(0.6, 1.0)))
            )

        if sc.fp_rate_per_frame > 0:
            for _ in range(int(rng.poisson(sc.fp_rate_per_frame))):
                cx = float(rng.uniform(0.0, width))
                cy = float(rng.uniform(0.0, cam.image_height_px))
                box = BoundingBox(cx - sc.box_w_px / 2.0, cy - sc.box_h_px / 2.0, sc.box_w_px, sc.box_h_px)
                detections.append(
                    Detection(frame=frame, box=box, confidence=float(rng.uniform(0.3, 0.9)))
                )

        vehicles = [
            v
            for v in vehicles
            if -sc.spawn_margin_px - v.w <= v.x <= width + sc.spawn_margin_px + v.w
        ]

    return truth, detections


def _truth_speeds_kmh(
    truth: list[TruthBox], gsd_km_per_px: float, fps: float
) -> dict[tuple[int, int], float]:
    """Instantaneous speed per (vehicle, frame) from consecutive positions."""

    by_vehicle: dict[int, list[TruthBox]] = {}
    for row in truth:
        by_vehicle.setdefault(row.vehicle_id, []).append(row)
    speeds: dict[tuple[int, int], float] = {}
    for vid, rows in by_vehicle.items():
        rows.sort(key=lambda r: r.frame)
        for prev, cur in zip(rows, rows[1:]):
            if cur.frame - prev.frame != 1:
                continue
            px = math.hypot(
                (cur.box.x + cur.box.w / 2.0) - (prev.box.x + prev.box.w / 2.0),
                (cur.box.y + cur.box.h / 2.0) - (prev.box.y + prev.box.h / 2.0),
            )
            speeds[(vid, cur.frame)] = px * gsd_km_per_px * fps * 3600.0
    return speeds


def evaluate(
    truth: list[TruthBox],
    records: list[TrackRecord],
    *,
    gsd_km_per_px: float,
    fps: float,
    stats: list[FrameStats] | None = None,
    expected_vf_kmh: float | None = None,
    expected_kj_veh_per_km: float | None = None,
    fd_settings: FdSettings | None = None,
) -> EvalReport:
    """Score pipeline output against ground truth.

    Per truth row the nearest record center within one box diagonal claims
    the vehicle-frame. Switch counting and purity use those claims; velocity
    RMSE compares record velocities with speeds recomputed from consecutive
    truth positions; density MAE compares per-frame truth counts with the
    supplied frame statistics. FD parameter errors are computed only when the
    expected law and frame statistics are both given and a fit is possible.
    """

    if not truth:
        raise ValueError("ground truth is empty")
    if not records:
        raise ValueError("pipeline output is empty")

    records_by_frame: dict[int, list[TrackRecord]] = {}
    for rec in records:
        records_by_frame.setdefault(rec.frame, []).append(rec)

    claims: dict[int, list[tuple[int, int | None]]] = {}
    velocity_sq_errors: list[float] = []
    truth_speeds = _truth_speeds_kmh(truth, gsd_km_per_px, fps)

    for row in sorted(truth, key=lambda r: (r.vehicle_id, r.frame)):
        cx = row.box.x + row.box.w / 2.0
        cy = row.box.y + row.box.h / 2.0
        gate = math.hypot(row.box.w, row.box.h)
        best_id: int | None = None
        best_dist = gate
        best_velocity: float | None = None
        for rec in records_by_frame.get(row.frame, ()):
            dist = math.hypot(rec.center_x - cx, rec.center_y - cy)
            if dist < best_dist:
                best_dist = dist
                best_id = rec.track_id
                best_velocity = rec.velocity_kmh
        claims.setdefault(row.vehicle_id, []).append((row.frame, best_id))
        truth_speed = truth_speeds.get((row.vehicle_id, row.frame))
        if best_id is not None and best_velocity is not None and truth_speed is not None:
            velocity_sq_errors.append((best_velocity - truth_speed) ** 2)

    id_switches = 0
    pure_frames = 0
    total_frames = 0
    for claimed in claims.values():
        ids = [tid for _, tid in claimed if tid is not None]
        for a, b in zip(ids, ids[1:]):
            if a != b:
                id_switches += 1
        total_frames += len(claimed)
        if ids:
            majority = max(set(ids), key=ids.count)
            pure_frames += sum(1 for tid in ids if tid == majority)
    track_purity = pure_frames / total_frames if total_frames else 0.0

    velocity_rmse = (
        math.sqrt(math.fsum(velocity_sq_errors) / len(velocity_sq_errors))
        if velocity_sq_errors
        else None
    )

    density_mae: float | None = None
    if stats:
        truth_counts: dict[int, int] = {}
        for row in truth:
            truth_counts[row.frame] = truth_counts.get(row.frame, 0) + 1
        gaps = [abs(truth_counts.get(s.frame, 0) - s.vehicle_count) for s in stats]
        density_mae = math.fsum(gaps) / len(gaps)

    fd_param_errors: tuple[float, float] | None = None
    if stats and expected_vf_kmh is not None and expected_kj_veh_per_km is not None:
        settings = fd_settings or FdSettings(model="greenshields")
        samples = samples_from_stats(stats, settings.axis_mode)
        bin_width = settings.effective_bin_width()
        bins = bin_samples(samples, bin_width, settings.min_bin_count)
        try:
            fit = fit_speed_density(bins, "greenshields")
            curve = fundamental_diagram(bins, fit, bin_width)
        except FitError:
            fit = None
            curve = None
        if fit is not None and curve is not None and not fit.unbounded:
            vf_error = abs(fit.coefficients[0] - expected_vf_kmh) / expected_vf_kmh
            expected_critical = expected_kj_veh_per_km / 2.0
            critical_error = abs(curve.critical_density - expected_critical) / expected_critical
            fd_param_errors = (vf_error, critical_error)

    return EvalReport(
        id_switches=id_switches,
        track_purity=track_purity,
        velocity_rmse_kmh=velocity_rmse,
        density_mae=density_mae,
        fd_param_errors=fd_param_errors,
    )
