"""Absolute orientation between two point sets (least-squares rigid fit).

Given paired points a_i (frame A) and b_i (frame B), finds the rigid
transform T minimizing sum ||T(a_i) - b_i||^2 via the SVD of the
cross-covariance, with the determinant-corrected rotation so reflections
are never returned.
"""

from __future__ import annotations

import numpy as np

from ..errors import DegenerateInput
from .pose import Pose, quat_from_matrix

_COLLINEAR_RTOL = 1e-8


def register_absolute_orientation(src: np.ndarray, dst: np.ndarray) -> tuple[Pose, float]:
    """Rigid transform mapping ``src`` points onto ``dst`` points.

    Returns (pose, rms) where pose.apply(src) approximates dst and rms is
    the root-mean-square residual in the units of the inputs.  Raises
    DegenerateInput when fewer than 3 points are given, the point counts
    differ, or the source points are collinear (rotation about the line
    is unobservable).
    """
    src = np.asarray(src, dtype=float)
    dst = np.asarray(dst, dtype=float)
    if src.ndim != 2 or src.shape[1] != 3 or dst.ndim != 2 or dst.shape[1] != 3:
        raise DegenerateInput("point sets must be (N, 3) arrays")
    if src.shape[0] != dst.shape[0]:
        raise DegenerateInput(f"point count mismatch: {src.shape[0]} vs {dst.shape[0]}")
    n = src.shape[0]
    if n < 3:
        raise DegenerateInput(f"need at least 3 point pairs, got {n}")

    ca = src.mean(axis=0)
    cb = dst.mean(axis=0)
    a0 = src - ca
    b0 = dst - cb

    H = a0.T @ b0
    U, S, Vt = np.linalg.svd(H)

    # collinear sources leave the second singular value of the centred
    # source spread at ~0; check the source spread directly so noise in
    # dst cannot mask the degeneracy
    spread = np.linalg.svd(a0, compute_uv=False)
    if spread[1] <= _COLLINEAR_RTOL * max(spread[0], 1.0):
        raise DegenerateInput("source points are collinear")

    d = np.sign(np.linalg.det(Vt.T @ U.T))
    if d == 0.0:
        d = 1.0
    R = Vt.T @ np.diag([1.0, 1.0, d]) @ U.T
    t = cb - R @ ca

    pose = Pose(t=t, q=quat_from_matrix(R))
    res = pose.apply(src) - dst
    rms = float(np.sqrt(np.mean(np.sum(res * res, axis=1))))
    return pose, rms
