"""Forward-backward corner tracking with an exact inlier gate.

The simulator stands in for an optical-flow tracker: corner motion between
frames is known, and the configured noise model injects per-point forward
error plus a round-trip drift. A corner is an inlier iff the distance
between its original location and its backward-tracked estimate is <= tau.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import TooFewCorners


@dataclass(frozen=True)
class TrackingNoise:
    """Injected tracking error model.

    forward_sigma_px corrupts the forward estimates q+; roundtrip_sigma_px
    drifts the backward estimates q- away from the originals. Outliers get
    a large forward error and a round-trip drift that trips the gate;
    either a fixed index set or a rate can select them.
    """

    forward_sigma_px: float = 0.0
    roundtrip_sigma_px: float = 0.0
    outlier_rate: float = 0.0
    outlier_indices: tuple = None
    outlier_forward_px: float = 6.0
    outlier_roundtrip_px: float = 3.0


def _apply_motion(corners: np.ndarray, motion) -> np.ndarray:
    if callable(motion):
        moved = np.asarray(motion(corners), dtype=float)
        if moved.shape != corners.shape:
            raise ValueError("motion callable must preserve the corner array shape")
        return moved
    shift = np.asarray(motion, dtype=float)
    if shift.shape == (2,):
        return corners + shift
    raise ValueError("motion must be a callable or a 2-vector pixel shift")


def track_forward_backward(
    prev_corners,
    motion,
    tau: float = 1.0,
    noise: TrackingNoise = TrackingNoise(),
    rng=None,
) -> tuple[np.ndarray, np.ndarray]:
    """Track corners one frame forward, validate by tracking back.

    Returns (q_plus, inlier_mask). The gate is exact: inlier i iff
    ||q_i - q_i^-||_2 <= tau. Raises TooFewCorners for fewer than 4 points.
    """
    q = np.atleast_2d(np.asarray(prev_corners, dtype=float))
    m = len(q)
    if m < 4:
        raise TooFewCorners(f"need at least 4 corners, got {m}")
    rng = np.random.default_rng() if rng is None else rng

    q_plus = _apply_motion(q, motion)
    q_minus = q.copy()

    if noise.forward_sigma_px > 0.0:
        q_plus = q_plus + rng.normal(0.0, noise.forward_sigma_px, (m, 2))
    if noise.roundtrip_sigma_px > 0.0:
        q_minus = q_minus + rng.normal(0.0, noise.roundtrip_sigma_px, (m, 2))

    if noise.outlier_indices is not None:
        bad = np.asarray(noise.outlier_indices, dtype=int)
    elif noise.outlier_rate > 0.0:
        bad = np.flatnonzero(rng.random(m) < noise.outlier_rate)
    else:
        bad = np.empty(0, dtype=int)
    for i in bad:
        u = rng.normal(0.0, 1.0, 2)
        u /= max(np.linalg.norm(u), 1e-12)
        q_plus[i] += noise.outlier_forward_px * u
        v = rng.normal(0.0, 1.0, 2)
        v /= max(np.linalg.norm(v), 1e-12)
        q_minus[i] += noise.outlier_roundtrip_px * v

    inliers = np.linalg.norm(q - q_minus, axis=1) <= tau
    return q_plus, inliers
