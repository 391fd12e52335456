"""Simulated vision stack: pinhole camera, forward-backward marker tracking,
planar PnP, marker-adapter assemblies, constrained needle pose search, and a
double-rate Kalman smoother."""

from .camera import OCCLUDED, CameraModel, is_occluded, project, project_points, unproject
from .tracking import TrackingNoise, track_forward_backward
from .pnp import estimate_marker_pose
from .markers import (
    AssemblyTracker,
    MarkerAssembly,
    MarkerGeometry,
    ObservationNoise,
    observe_assembly,
)
from .needle import (
    ClutterModel,
    FeatureMap,
    NeedleModel,
    NeedleSearchSpace,
    detect_needle,
    render_needle_features,
)
from .kalman import DoubleRateKalman, kalman_step

__all__ = [
    "CameraModel",
    "OCCLUDED",
    "is_occluded",
    "project",
    "project_points",
    "unproject",
    "TrackingNoise",
    "track_forward_backward",
    "estimate_marker_pose",
    "MarkerGeometry",
    "MarkerAssembly",
    "ObservationNoise",
    "AssemblyTracker",
    "observe_assembly",
    "NeedleModel",
    "NeedleSearchSpace",
    "FeatureMap",
    "ClutterModel",
    "render_needle_features",
    "detect_needle",
    "DoubleRateKalman",
    "kalman_step",
]
