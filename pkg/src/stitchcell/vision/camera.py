"""Pinhole camera model for the simulated cell.

Points are given in the camera frame (z forward, x right, y down in image
terms); projections are pixel coordinates. Occlusion is a value, not an
error: a point behind the camera or landing outside the image projects to
``OCCLUDED``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..geometry.pose import FrameId, FramedPose, Pose


class _Occluded:
    """Singleton marker for unprojectable observations."""

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self):
        return "OCCLUDED"

    def __bool__(self):
        return False


OCCLUDED = _Occluded()


def is_occluded(value) -> bool:
    return value is OCCLUDED


def _identity_pose() -> FramedPose:
    c = FrameId.camera()
    return FramedPose.constant(c, c, Pose.identity())


@dataclass(frozen=True)
class CameraModel:
    """Intrinsics plus mounting pose. Defaults model the cell's overhead
    camera: 640x480 at 20 fps with ~1200 px focal length, which resolves
    roughly 0.45 mm per pixel at the 550 mm working distance."""

    fx: float = 1200.0
    fy: float = 1200.0
    cx: float = 320.0
    cy: float = 240.0
    width: int = 640
    height: int = 480
    fps: float = 20.0
    pose: FramedPose = field(default_factory=_identity_pose)

    def __post_init__(self):
        if self.fx <= 0 or self.fy <= 0:
            raise ValueError("focal lengths must be positive")
        if not (0 <= self.cx < self.width and 0 <= self.cy < self.height):
            raise ValueError("principal point must lie inside the image")

    @property
    def dt(self) -> float:
        return 1.0 / self.fps

    def contains(self, px: np.ndarray) -> bool:
        u, v = float(px[0]), float(px[1])
        return 0.0 <= u <= self.width - 1 and 0.0 <= v <= self.height - 1


def project(camera: CameraModel, point, noise_px: float = 0.0, rng=None):
    """Project one camera-frame point to pixels.

    Gaussian pixel noise (if any) is applied before the bounds check, so a
    noisy observation can fall off the sensor and come back OCCLUDED.
    """
    p = np.asarray(point, dtype=float)
    if p[2] <= 0.0:
        return OCCLUDED
    px = np.array([
        camera.fx * p[0] / p[2] + camera.cx,
        camera.fy * p[1] / p[2] + camera.cy,
    ])
    if noise_px > 0.0:
        rng = np.random.default_rng() if rng is None else rng
        px = px + rng.normal(0.0, noise_px, 2)
    if not camera.contains(px):
        return OCCLUDED
    return px


def project_points(camera: CameraModel, points: np.ndarray,
                   noise_px: float = 0.0, rng=None) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized projection: (N, 3) -> ((N, 2) px, (N,) visibility mask).

    Rows with mask False hold the un-bounded projection values (or NaN for
    points behind the camera); callers must not read them as observations.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    z = pts[:, 2]
    front = z > 0.0
    px = np.full((len(pts), 2), np.nan)
    with np.errstate(divide="ignore", invalid="ignore"):
        px[front, 0] = camera.fx * pts[front, 0] / z[front] + camera.cx
        px[front, 1] = camera.fy * pts[front, 1] / z[front] + camera.cy
    if noise_px > 0.0:
        rng = np.random.default_rng() if rng is None else rng
        px[front] += rng.normal(0.0, noise_px, (int(front.sum()), 2))
    inside = (
        front
        & (px[:, 0] >= 0.0) & (px[:, 0] <= camera.width - 1)
        & (px[:, 1] >= 0.0) & (px[:, 1] <= camera.height - 1)
    )
    return px, inside


def unproject(camera: CameraModel, px, depth: float) -> np.ndarray:
    """Back-project a pixel along its ray to the given camera-frame depth."""
    u, v = float(px[0]), float(px[1])
    if depth <= 0.0:
        raise ValueError("depth must be positive")
    return np.array([
        (u - camera.cx) / camera.fx * depth,
        (v - camera.cy) / camera.fy * depth,
        depth,
    ])
