"""Constant-velocity Kalman filtering over bounding-box centers.

State is (cx, cy, vx, vy) with the time step fixed at one frame, so the
transition matrix advances position by velocity and leaves velocity alone.
Only the center is measured; box size is carried along unfiltered.
"""

import math
from dataclasses import dataclass

import numpy as np

from .model import BoundingBox, box_center

_F = np.array(
    [
        [1.0, 0.0, 1.0, 0.0],
        [0.0, 1.0, 0.0, 1.0],
        [0.0, 0.0, 1.0, 0.0],
        [0.0, 0.0, 0.0, 1.0],
    ]
)
_H = np.array(
    [
        [1.0, 0.0, 0.0, 0.0],
        [0.0, 1.0, 0.0, 0.0],
    ]
)
_I4 = np.eye(4)


@dataclass(frozen=True, slots=True)
class NoiseConfig:
    """Diagonal process/measurement noise variances, in px^2."""

    process_pos_var: float = 1.0
    process_vel_var: float = 0.25
    measurement_var: float = 1.0
    initial_vel_var: float = 1000.0


@dataclass(frozen=True, slots=True)
class KalmanState:
    """Immutable filter snapshot: mean (4,), covariance (4, 4), box size."""

    mean: np.ndarray
    covariance: np.ndarray
    last_box_size: tuple[float, float]

    def center(self) -> tuple[float, float]:
        return (float(self.mean[0]), float(self.mean[1]))

    def box(self) -> BoundingBox:
        w, h = self.last_box_size
        return BoundingBox(float(self.mean[0]) - w / 2.0, float(self.mean[1]) - h / 2.0, w, h)


def kf_init(box: BoundingBox, noise: NoiseConfig) -> KalmanState:
    """Start a filter at the box center with zero velocity.

    The velocity variance is set large so the first few corrections pull the
    velocity estimate toward the data instead of the zero prior.
    """

    cx, cy = box_center(box)
    mean = np.array([cx, cy, 0.0, 0.0])
    covariance = np.diag(
        [
            noise.measurement_var,
            noise.measurement_var,
            noise.initial_vel_var,
            noise.initial_vel_var,
        ]
    )
    return KalmanState(mean=mean, covariance=covariance, last_box_size=(box.w, box.h))


def kf_predict(state: KalmanState, noise: NoiseConfig) -> KalmanState:
    """Advance mean and covariance one frame: x' = Fx, P' = FPF^T + Q."""

    q = np.diag(
        [
            noise.process_pos_var,
            noise.process_pos_var,
            noise.process_vel_var,
            noise.process_vel_var,
        ]
    )
    mean = _F @ state.mean
    covariance = _F @ state.covariance @ _F.T + q
    covariance = (covariance + covariance.T) / 2.0
    return KalmanState(mean=mean, covariance=covariance, last_box_size=state.last_box_size)


def kf_correct(state: KalmanState, center: tuple[float, float], noise: NoiseConfig) -> KalmanState:
    """Fold a measured center into the state.

    Uses the Joseph-form covariance update, which stays symmetric positive
    semidefinite under roundoff where the short form (I - KH)P can drift.
    """

    if not (math.isfinite(center[0]) and math.isfinite(center[1])):
        raise ValueError(f"measurement must be finite, got {center!r}")

    z = np.asarray(center, dtype=float)
    r = noise.measurement_var * np.eye(2)
    p = state.covariance
    s = _H @ p @ _H.T + r
    gain = np.linalg.solve(s.T, (p @ _H.T).T).T
    innovation = z - _H @ state.mean
    mean = state.mean + gain @ innovation
    a = _I4 - gain @ _H
    covariance = a @ p @ a.T + gain @ r @ gain.T
    covariance = (covariance + covariance.T) / 2.0
    return KalmanState(mean=mean, covariance=covariance, last_box_size=state.last_box_size)


def with_box_size(state: KalmanState, w: float, h: float) -> KalmanState:
    return KalmanState(mean=state.mean, covariance=state.covariance, last_box_size=(w, h))
