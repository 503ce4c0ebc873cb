"""Vehicle tracking and traffic-flow analysis for fixed aerial camera footage."""

__version__ = "0.1.0"

from .model import (
    BoundingBox,
    CameraModel,
    Detection,
    Track,
    TrackerConfig,
    TrackRecord,
    TrackStatus,
)

__all__ = [
    "BoundingBox",
    "CameraModel",
    "Detection",
    "Track",
    "TrackerConfig",
    "TrackRecord",
    "TrackStatus",
    "__version__",
]
