"""Frame-by-frame multi-object tracking with occlusion coasting.

Each step runs the same cycle: predict every live track one frame ahead,
associate predicted boxes with the frame's detections by IoU, correct matched
tracks, spawn tentative tracks for unmatched detections, and coast or retire
unmatched tracks. Velocity and direction are recomputed once the frame's
state is final, so every emitted record reflects the posterior estimate.
"""

import math
from dataclasses import dataclass, field

from .assoc import Assignment, score_matrix, solve_assignment
from .geo import compute_gsd, track_velocity_kmh
from .kalman import KalmanState, NoiseConfig, kf_correct, kf_init, kf_predict, with_box_size
from .model import (
    BoundingBox,
    CameraModel,
    Detection,
    Track,
    TrackEntry,
    TrackerConfig,
    TrackRecord,
    TrackStatus,
    box_center,
    validate_config,
)

# Compass labels for 45-degree sectors counter-clockwise from +x, with image
# y pointing down (so "top" is decreasing y).
_DIRECTIONS = (
    "right",
    "top-right",
    "top",
    "top-left",
    "left",
    "bottom-left",
    "bottom",
    "bottom-right",
)
_MIN_DIRECTION_DISPLACEMENT_PX = 0.5


def velocity_window_displacements(track: Track, f: int) -> list[float]:
    """Consecutive center distances over the last ``min(f, len - 1)`` steps.

    ``f`` counts frame-pairs: a track with 26 history entries and f=25 yields
    25 distances. Coasted entries participate like observed ones so speed
    traces stay continuous through occlusions.
    """

    if f < 2:
        raise ValueError(f"window must span at least 2 frame-pairs, got {f}")
    entries = track.boxes[-(f + 1):]
    centers = [box_center(e.box) for e in entries]
    return [
        math.hypot(b[0] - a[0], b[1] - a[1])
        for a, b in zip(centers, centers[1:])
    ]


def _window_entries(track: Track, f: int) -> list[TrackEntry]:
    return track.boxes[-(f + 1):]


def compute_direction(track: Track, velocity_window: int) -> str | None:
    """8-way compass label of the track's displacement over the window.

    None when fewer than two observed entries exist or the displacement
    magnitude is below half a pixel.
    """

    observed = sum(1 for e in track.boxes if e.observed)
    if observed < 2:
        return None
    entries = _window_entries(track, velocity_window)
    if len(entries) < 2:
        return None
    x0, y0 = box_center(entries[0].box)
    x1, y1 = box_center(entries[-1].box)
    dx = x1 - x0
    dy = y1 - y0
    if math.hypot(dx, dy) < _MIN_DIRECTION_DISPLACEMENT_PX:
        return None
    angle = math.degrees(math.atan2(-dy, dx))
    sector = round(angle / 45.0) % 8
    return _DIRECTIONS[sector]


def _mean_frame_displacement(track: Track, window: int) -> tuple[float, float]:
    """Average per-frame motion over the last ``window`` observed entries."""

    observed = [e for e in track.boxes if e.observed][-window:]
    if len(observed) < 2:
        return (0.0, 0.0)
    x0, y0 = box_center(observed[0].box)
    x1, y1 = box_center(observed[-1].box)
    span = observed[-1].frame - observed[0].frame
    return ((x1 - x0) / span, (y1 - y0) / span)


def handle_occlusion(track: Track, config: TrackerConfig, noise: NoiseConfig, frame: int) -> Track:
    """Coast or retire a track that went unmatched on ``frame``.

    Expects the track's filter to be already predicted for this frame (the
    step loop predicts every live track before association). Tentative tracks
    are dropped on their first miss. Others receive a pseudo-measurement:
    the last observed center extrapolated by the mean per-frame displacement,
    which keeps the filter on the linear motion the vehicle had before
    disappearing. Past ``max_miss_frames`` misses the track is removed.
    """

    if track.status is TrackStatus.TENTATIVE:
        track.status = TrackStatus.REMOVED
        return track
    if track.miss_count + 1 > config.max_miss_frames:
        track.status = TrackStatus.REMOVED
        return track

    track.miss_count += 1
    track.status = TrackStatus.COASTING
    last_observed = next(e for e in reversed(track.boxes) if e.observed)
    ox, oy = box_center(last_observed.box)
    dx, dy = _mean_frame_displacement(track, config.motion_model_window)
    pseudo = (ox + track.miss_count * dx, oy + track.miss_count * dy)
    track.kalman = kf_correct(track.kalman, pseudo, noise)
    track.boxes.append(TrackEntry(frame=frame, box=track.kalman.box(), observed=False))
    return track


@dataclass(slots=True)
class TrackerState:
    """Live tracks plus the bookkeeping needed to keep IDs unique."""

    config: TrackerConfig
    camera: CameraModel
    noise: NoiseConfig = field(default_factory=NoiseConfig)
    tracks: list[Track] = field(default_factory=list)
    next_id: int = 0
    current_frame: int = -1
    gsd_km_per_px: float = field(init=False)

    def __post_init__(self) -> None:
        problems = validate_config(self.config, self.camera)
        if problems:
            raise ValueError("invalid configuration: " + "; ".join(problems))
        self.gsd_km_per_px = compute_gsd(self.camera).gsd_km_per_px


def step(state: TrackerState, frame: int, detections: list[Detection]) -> list[TrackRecord]:
    """Advance the tracker one frame and return this frame's record rows.

    ``frame`` must be strictly greater than the last stepped frame; gaps are
    allowed and count as a single miss for unmatched tracks. An empty
    detection list is a valid frame in which every track goes unmatched.
    """

    if frame <= state.current_frame:
        raise ValueError(
            f"frame {frame} is not after the last stepped frame {state.current_frame}"
        )
    for d in detections:
        if d.frame != frame:
            raise ValueError(f"detection frame {d.frame} does not match step frame {frame}")

    for track in state.tracks:
        track.kalman = kf_predict(track.kalman, state.noise)

    predicted = [t.kalman.box() for t in state.tracks]
    det_boxes = [d.box for d in detections]
    assignment = solve_assignment(
        score_matrix(predicted, det_boxes), state.config.iou_threshold
    )

    for ti, dj in assignment.pairs:
        track = state.tracks[ti]
        det = detections[dj]
        track.kalman = kf_correct(track.kalman, box_center(det.box), state.noise)
        track.kalman = with_box_size(track.kalman, det.box.w, det.box.h)
        track.boxes.append(TrackEntry(frame=frame, box=track.kalman.box(), observed=True))
        track.miss_count = 0
        track.hits += 1
        if track.status is TrackStatus.TENTATIVE:
            if track.hits >= state.config.min_hits_to_confirm:
                track.status = TrackStatus.ACTIVE
        elif track.status is TrackStatus.COASTING:
            track.status = TrackStatus.ACTIVE

    for ti in assignment.unmatched_tracks:
        handle_occlusion(state.tracks[ti], state.config, state.noise, frame)

    spawned: list[Track] = []
    for dj in assignment.unmatched_detections:
        det = detections[dj]
        status = (
            TrackStatus.ACTIVE
            if state.config.min_hits_to_confirm <= 1
            else TrackStatus.TENTATIVE
        )
        track = Track(
            id=state.next_id,
            status=status,
            kalman=kf_init(det.box, state.noise),
            boxes=[TrackEntry(frame=frame, box=det.box, observed=True)],
        )
        state.next_id += 1
        spawned.append(track)

    state.tracks = [t for t in state.tracks if t.status is not TrackStatus.REMOVED]
    state.tracks.extend(spawned)

    gsd = state.gsd_km_per_px
    records: list[TrackRecord] = []
    for track in state.tracks:
        if len(track.boxes) >= 2:
            entries = _window_entries(track, state.config.velocity_window)
            frame_difference = entries[-1].frame - entries[0].frame
            track.velocity_kmh = track_velocity_kmh(
                velocity_window_displacements(track, state.config.velocity_window),
                gsd,
                state.camera.fps,
                frame_difference,
            )
            track.direction = compute_direction(track, state.config.velocity_window)
        cx, cy = track.last_center()
        records.append(
            TrackRecord(
                track_id=track.id,
                frame=frame,
                timestamp_s=frame / state.camera.fps,
                center_x=cx,
                center_y=cy,
                velocity_kmh=track.velocity_kmh,
                direction=track.direction,
                observed=track.last_entry().observed,
            )
        )

    state.current_frame = frame
    return records


class Tracker:
    """Convenience wrapper binding a TrackerState to its step function."""

    def __init__(
        self,
        config: TrackerConfig,
        camera: CameraModel,
        noise: NoiseConfig | None = None,
    ) -> None:
        self.state = TrackerState(
            config=config, camera=camera, noise=noise or NoiseConfig()
        )

    @property
    def tracks(self) -> list[Track]:
        return self.state.tracks

    def step(self, frame: int, detections: list[Detection]) -> list[TrackRecord]:
        return step(self.state, frame, detections)
