"""Square fiducial markers on prism-shaped adapters.

Each tracked body carries a regular-prism adapter with one marker per face
(five faces on the needle drivers, eight on the mandrel), so at least one
marker faces the camera in any working orientation. Observation of a body
is: project the true marker corners, run forward-backward validation
against the previous frame, estimate the best-visible marker's pose from
the surviving corners, and compose back through the adapter geometry.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import math
import numpy as np

from ..errors import DegenerateConfiguration, TargetUnobservable, TooFewCorners
from ..geometry.pose import Pose
from .camera import CameraModel, project_points
from .pnp import estimate_marker_pose
from .tracking import TrackingNoise, track_forward_backward


@dataclass(frozen=True)
class MarkerGeometry:
    """Planar square marker; points in the marker frame (z = 0, mm)."""

    side_mm: float = 20.0
    dense: bool = True  # corners plus edge midpoints (8 points) vs corners only

    def points(self) -> np.ndarray:
        h = 0.5 * self.side_mm
        corners = np.array([
            [-h, -h, 0.0],
            [h, -h, 0.0],
            [h, h, 0.0],
            [-h, h, 0.0],
        ])
        if not self.dense:
            return corners
        mids = 0.5 * (corners + np.roll(corners, -1, axis=0))
        out = np.empty((8, 3))
        out[0::2] = corners
        out[1::2] = mids
        return out


@dataclass(frozen=True)
class MarkerAssembly:
    """Regular prism adapter: one marker per lateral face.

    The assembly frame has z along the prism axis; face k's outward normal
    is (cos(2 pi k / n), sin(2 pi k / n), 0) and its marker sits at the
    apothem with x tangent to the prism and y along the axis.
    """

    n_faces: int
    apothem_mm: float
    marker: MarkerGeometry = field(default_factory=MarkerGeometry)

    def __post_init__(self):
        if self.n_faces < 3:
            raise ValueError("a prism needs at least 3 faces")
        width = 2.0 * self.apothem_mm * math.tan(math.pi / self.n_faces)
        if self.marker.side_mm > width + 1e-9:
            raise ValueError("marker does not fit on a prism face")

    @staticmethod
    def driver() -> "MarkerAssembly":
        return MarkerAssembly(n_faces=5, apothem_mm=15.0)

    @staticmethod
    def mandrel() -> "MarkerAssembly":
        # wide faces so the markers stay resolvable at the full working
        # distance; a 30 mm marker on a 40 mm-apothem octagon fits with room
        return MarkerAssembly(
            n_faces=8, apothem_mm=40.0, marker=MarkerGeometry(side_mm=30.0)
        )

    def face_transform(self, k: int) -> Pose:
        """Assembly-to-marker transform for face k."""
        g = 2.0 * math.pi * (k % self.n_faces) / self.n_faces
        normal = np.array([math.cos(g), math.sin(g), 0.0])
        tangent = np.array([-math.sin(g), math.cos(g), 0.0])
        axis = np.array([0.0, 0.0, 1.0])
        T = np.eye(4)
        T[:3, :3] = np.column_stack([tangent, axis, normal])
        T[:3, 3] = self.apothem_mm * normal
        return Pose.from_matrix(T)

    def face_corners_camera(self, k: int, assembly_pose: Pose) -> np.ndarray:
        """Marker points of face k in the camera frame (mm)."""
        return (assembly_pose * self.face_transform(k)).apply(self.marker.points())

    def visible_faces(self, camera: CameraModel, assembly_pose: Pose,
                      max_grazing_cos: float = -0.25) -> list:
        """Faces whose marker fully projects into the image and faces the
        camera better than the grazing limit."""
        out = []
        for k in range(self.n_faces):
            pose_m = assembly_pose * self.face_transform(k)
            normal = pose_m.rotation_matrix()[:, 2]
            center = pose_m.t
            depth = np.linalg.norm(center)
            if depth <= 0.0 or center[2] <= 0.0:
                continue
            if float(np.dot(normal, center / depth)) > max_grazing_cos:
                continue
            _, inside = project_points(camera, pose_m.apply(self.marker.points()))
            if bool(np.all(inside)):
                out.append(k)
        return out


@dataclass(frozen=True)
class ObservationNoise:
    """Per-tick observation corruption for marker tracking."""

    pixel_sigma: float = 0.0
    roundtrip_sigma: float = 0.0
    outlier_rate: float = 0.0
    outlier_px: float = 6.0

    def to_tracking(self) -> TrackingNoise:
        return TrackingNoise(
            forward_sigma_px=self.pixel_sigma,
            roundtrip_sigma_px=self.roundtrip_sigma,
            outlier_rate=self.outlier_rate,
            outlier_forward_px=self.outlier_px,
            outlier_roundtrip_px=3.0,
        )


class AssemblyTracker:
    """Frame-to-frame observer for one marker assembly.

    Holds the previous frame's corner locations per face so the
    forward-backward gate has a reference; faces unseen so far are
    initialized at their current location.
    """

    def __init__(self, assembly: MarkerAssembly, camera: CameraModel, tau: float = 1.0):
        self.assembly = assembly
        self.camera = camera
        self.tau = tau
        self._prev: dict = {}

    def reset(self) -> None:
        self._prev.clear()

    def observe(self, true_pose: Pose, noise: ObservationNoise = ObservationNoise(),
                rng=None) -> tuple[Pose, dict]:
        """Estimate the assembly pose from its best-visible marker.

        Raises TargetUnobservable when no face yields enough validated
        corners for pose estimation.
        """
        rng = np.random.default_rng() if rng is None else rng
        faces = self.assembly.visible_faces(self.camera, true_pose)
        tracked = []
        new_prev = {}
        for k in faces:
            pts_cam = self.assembly.face_corners_camera(k, true_pose)
            px_true, inside = project_points(self.camera, pts_cam)
            if not np.all(inside):
                continue
            prev = self._prev.get(k, px_true)
            try:
                q_plus, inliers = track_forward_backward(
                    prev, lambda q: px_true, tau=self.tau,
                    noise=noise.to_tracking(), rng=rng,
                )
            except TooFewCorners:
                continue
            new_prev[k] = px_true
            if int(inliers.sum()) >= 4:
                tracked.append((k, q_plus, inliers))
        self._prev = new_prev
        if not tracked:
            raise TargetUnobservable("no marker face passes the visibility and gate checks")

        k, q_plus, inliers = max(tracked, key=lambda t: (int(t[2].sum()), -t[0]))
        obj = self.assembly.marker.points()
        try:
            pose_marker, rms = estimate_marker_pose(
                self.camera, q_plus[inliers], obj[inliers]
            )
        except DegenerateConfiguration as exc:
            raise TargetUnobservable(f"marker pose estimation failed: {exc}")
        pose_assembly = pose_marker * self.assembly.face_transform(k).inverse()
        info = {
            "face": k,
            "n_inliers": int(inliers.sum()),
            "rms_px": rms,
            "n_faces_tracked": len(tracked),
        }
        return pose_assembly, info


def observe_assembly(assembly: MarkerAssembly, camera: CameraModel, true_pose: Pose,
                     noise: ObservationNoise = ObservationNoise(), tau: float = 1.0,
                     rng=None) -> tuple[Pose, dict]:
    """Single-shot assembly observation (no frame-to-frame history)."""
    return AssemblyTracker(assembly, camera, tau=tau).observe(true_pose, noise, rng)
