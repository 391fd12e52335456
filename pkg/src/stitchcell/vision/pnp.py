"""Pose from 2D-3D correspondences on a planar target.

Initialization is a normalized-DLT homography decomposition; the pose is
then polished by Gauss-Newton on the reprojection error over all six
degrees of freedom. Built for the cell's square markers: a handful of
coplanar points, millimetre object scale, sub-pixel accuracy required.
"""

from __future__ import annotations

import numpy as np

from ..errors import DegenerateConfiguration
from ..geometry.pose import Pose
from .camera import CameraModel


def _normalization(points: np.ndarray) -> np.ndarray:
    """Similarity transform taking points to zero mean, sqrt(2) RMS radius."""
    mean = points.mean(axis=0)
    d = np.linalg.norm(points - mean, axis=1).mean()
    s = np.sqrt(2.0) / max(d, 1e-12)
    T = np.array([
        [s, 0.0, -s * mean[0]],
        [0.0, s, -s * mean[1]],
        [0.0, 0.0, 1.0],
    ])
    return T


def _check_spread(points: np.ndarray, label: str) -> None:
    c = points - points.mean(axis=0)
    s = np.linalg.svd(c, compute_uv=False)
    if len(s) < 2 or s[1] <= 1e-8 * max(s[0], 1.0):
        raise DegenerateConfiguration(f"{label} points are collinear")


def _homography(obj_xy: np.ndarray, px: np.ndarray) -> np.ndarray:
    To = _normalization(obj_xy)
    Tp = _normalization(px)
    o = (To @ np.column_stack([obj_xy, np.ones(len(obj_xy))]).T).T
    p = (Tp @ np.column_stack([px, np.ones(len(px))]).T).T
    rows = []
    for (x, y, _), (u, v, _) in zip(o, p):
        rows.append([-x, -y, -1, 0, 0, 0, u * x, u * y, u])
        rows.append([0, 0, 0, -x, -y, -1, v * x, v * y, v])
    A = np.asarray(rows)
    _, s, vt = np.linalg.svd(A)
    if s[-2] <= 1e-10 * s[0]:
        raise DegenerateConfiguration("homography system is rank deficient")
    H = vt[-1].reshape(3, 3)
    return np.linalg.inv(Tp) @ H @ To


def _pose_from_homography(camera: CameraModel, H: np.ndarray) -> Pose:
    K = np.array([
        [camera.fx, 0.0, camera.cx],
        [0.0, camera.fy, camera.cy],
        [0.0, 0.0, 1.0],
    ])
    A = np.linalg.inv(K) @ H
    lam = 2.0 / (np.linalg.norm(A[:, 0]) + np.linalg.norm(A[:, 1]))
    r1, r2, t = lam * A[:, 0], lam * A[:, 1], lam * A[:, 2]
    if t[2] < 0:
        r1, r2, t = -r1, -r2, -t
    R = np.column_stack([r1, r2, np.cross(r1, r2)])
    # nearest rotation
    u, _, vt = np.linalg.svd(R)
    R = u @ vt
    if np.linalg.det(R) < 0:
        R = u @ np.diag([1.0, 1.0, -1.0]) @ vt
    T = np.eye(4)
    T[:3, :3] = R
    T[:3, 3] = t
    return Pose.from_matrix(T)


def _project_residuals(camera: CameraModel, R: np.ndarray, t: np.ndarray,
                       obj: np.ndarray, px: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    P = obj @ R.T + t
    z = P[:, 2]
    u = camera.fx * P[:, 0] / z + camera.cx
    v = camera.fy * P[:, 1] / z + camera.cy
    res = np.column_stack([u, v]) - px
    return res, P


def estimate_marker_pose(camera: CameraModel, corners_px, marker_points,
                         max_iters: int = 30) -> tuple[Pose, float]:
    """Marker pose in the camera frame, plus RMS reprojection residual (px).

    corners_px: (M, 2) observed pixels; marker_points: (M, 3) object points
    in the marker frame (planar, z = 0). Requires >= 4 non-collinear
    correspondences; raises DegenerateConfiguration otherwise.
    """
    px = np.atleast_2d(np.asarray(corners_px, dtype=float))
    obj = np.atleast_2d(np.asarray(marker_points, dtype=float))
    if len(px) != len(obj):
        raise DegenerateConfiguration("corner and object point counts differ")
    if len(px) < 4:
        raise DegenerateConfiguration(f"need >= 4 correspondences, got {len(px)}")
    if np.max(np.abs(obj[:, 2])) > 1e-6:
        raise DegenerateConfiguration("marker points must be planar with z = 0")
    _check_spread(obj[:, :2], "object")
    _check_spread(px, "image")

    pose = _pose_from_homography(camera, _homography(obj[:, :2], px))
    R = pose.rotation_matrix()
    t = pose.t.copy()

    lam = 1e-9
    res, P = _project_residuals(camera, R, t, obj, px)
    err = float(np.sum(res ** 2))
    for _ in range(max_iters):
        z = P[:, 2]
        # d(pixel)/d(camera point), stacked per correspondence
        J = np.zeros((2 * len(obj), 6))
        for i, (X, Y, Z) in enumerate(P):
            du = np.array([camera.fx / Z, 0.0, -camera.fx * X / Z ** 2])
            dv = np.array([0.0, camera.fy / Z, -camera.fy * Y / Z ** 2])
            dP = np.hstack([-_skew(P[i] - t), np.eye(3)])  # left rotation update
            J[2 * i] = du @ dP
            J[2 * i + 1] = dv @ dP
        g = J.T @ res.reshape(-1)
        Hn = J.T @ J
        try:
            step = np.linalg.solve(Hn + lam * np.eye(6), -g)
        except np.linalg.LinAlgError:
            raise DegenerateConfiguration("normal equations are singular")
        R_new = _rotvec_matrix(step[:3]) @ R
        t_new = t + step[3:]
        res_new, P_new = _project_residuals(camera, R_new, t_new, obj, px)
        err_new = float(np.sum(res_new ** 2))
        if err_new <= err:
            R, t, res, P, err = R_new, t_new, res_new, P_new, err_new
            lam = max(lam * 0.5, 1e-12)
            if float(np.linalg.norm(step)) < 1e-12:
                break
        else:
            lam *= 10.0
            if lam > 1e6:
                break

    T = np.eye(4)
    T[:3, :3] = R
    T[:3, 3] = t
    rms = float(np.sqrt(np.mean(np.sum(res ** 2, axis=1))))
    return Pose.from_matrix(T), rms


def _skew(v: np.ndarray) -> np.ndarray:
    return np.array([
        [0.0, -v[2], v[1]],
        [v[2], 0.0, -v[0]],
        [-v[1], v[0], 0.0],
    ])


def _rotvec_matrix(r: np.ndarray) -> np.ndarray:
    angle = float(np.linalg.norm(r))
    if angle < 1e-12:
        return np.eye(3) + _skew(r)
    k = r / angle
    K = _skew(k)
    return np.eye(3) + np.sin(angle) * K + (1.0 - np.cos(angle)) * (K @ K)
