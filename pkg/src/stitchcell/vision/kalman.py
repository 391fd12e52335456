"""Pose filtering across mismatched camera and servo rates.

The servo loop runs faster than the camera, so most control ticks have no
fresh measurement. A linear Kalman filter over [translation, rotation
vector] and their velocities predicts the target pose every tick and
corrects whenever an observation arrives. Rotation is linearized on the
rotation-vector chart; measured rotvecs are shifted by whole turns onto
the branch nearest the prediction before the update so the linearization
never sees a 2*pi jump.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..geometry.pose import Pose, quat_from_rotvec, quat_to_rotvec


@dataclass(frozen=True)
class KalmanConfig:
    """White-acceleration process model plus direct pose measurements."""

    q_trans: float = 4.0       # translation accel PSD, mm^2/s^3
    q_rot: float = 0.25        # rotation accel PSD, rad^2/s^3
    r_trans_mm: float = 0.2    # measurement sigma per translation axis
    r_rot_rad: float = 0.005   # measurement sigma per rotvec axis
    p0_trans_mm: float = 5.0   # initial pose sigma
    p0_rot_rad: float = 0.2
    p0_vel_trans: float = 50.0  # initial velocity sigma, mm/s
    p0_vel_rot: float = 2.0     # rad/s

    def __post_init__(self):
        if self.q_trans < 0 or self.q_rot < 0:
            raise ValueError("process noise must be non-negative")
        if self.r_trans_mm < 0 or self.r_rot_rad < 0:
            raise ValueError("measurement noise must be non-negative")


def _nearest_branch(r: np.ndarray, ref: np.ndarray) -> np.ndarray:
    """Shift a rotation vector by whole turns toward a reference."""
    best, best_d = r, float(np.linalg.norm(r - ref))
    n = float(np.linalg.norm(r))
    if n > 1e-12:
        axis = r / n
        for turns in (-1.0, 1.0):
            cand = r + turns * 2.0 * np.pi * axis
            d = float(np.linalg.norm(cand - ref))
            if d < best_d:
                best, best_d = cand, d
    return best


class DoubleRateKalman:
    """Constant-velocity filter over translation (mm) and rotvec (rad).

    State x = [t(3), r(3), t_dot(3), r_dot(3)]. step() always predicts
    forward by dt and corrects only when given a measurement, matching a
    loop that ticks faster than the camera delivers frames.
    """

    def __init__(self, initial: Pose, config: KalmanConfig = None):
        self.config = KalmanConfig() if config is None else config
        c = self.config
        self.x = np.zeros(12)
        self.x[0:3] = initial.t
        self.x[3:6] = quat_to_rotvec(initial.q)
        self.P = np.diag(
            [c.p0_trans_mm**2] * 3 + [c.p0_rot_rad**2] * 3
            + [c.p0_vel_trans**2] * 3 + [c.p0_vel_rot**2] * 3
        )

    @property
    def pose(self) -> Pose:
        return Pose(t=self.x[0:3].copy(), q=quat_from_rotvec(self.x[3:6]))

    def _predict(self, dt: float) -> None:
        c = self.config
        F = np.eye(12)
        F[0:6, 6:12] = dt * np.eye(6)
        q_axis = np.array([c.q_trans] * 3 + [c.q_rot] * 3)
        Q = np.zeros((12, 12))
        Q[0:6, 0:6] = np.diag(q_axis * dt**3 / 3.0)
        Q[0:6, 6:12] = np.diag(q_axis * dt**2 / 2.0)
        Q[6:12, 0:6] = np.diag(q_axis * dt**2 / 2.0)
        Q[6:12, 6:12] = np.diag(q_axis * dt)
        self.x = F @ self.x
        self.P = F @ self.P @ F.T + Q

    def _correct(self, measurement: Pose) -> None:
        c = self.config
        z = np.concatenate([
            np.asarray(measurement.t, dtype=float),
            _nearest_branch(quat_to_rotvec(measurement.q), self.x[3:6]),
        ])
        H = np.zeros((6, 12))
        H[0:6, 0:6] = np.eye(6)
        R = np.diag([c.r_trans_mm**2] * 3 + [c.r_rot_rad**2] * 3)
        S = H @ self.P @ H.T + R
        K = np.linalg.solve(S.T, (self.P @ H.T).T).T
        self.x = self.x + K @ (z - H @ self.x)
        IKH = np.eye(12) - K @ H
        self.P = IKH @ self.P @ IKH.T + K @ R @ K.T
        self.P = 0.5 * (self.P + self.P.T)

    def step(self, dt: float, measurement: Pose = None) -> Pose:
        """Advance by dt; fold in a measurement when one arrived."""
        if dt <= 0.0:
            raise ValueError("dt must be positive")
        self._predict(dt)
        if measurement is not None:
            self._correct(measurement)
        return self.pose


def kalman_step(filt: DoubleRateKalman, dt: float,
                measurement: Pose = None) -> Pose:
    return filt.step(dt, measurement)
