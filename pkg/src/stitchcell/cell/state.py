"""Mutable state of the three-robot sewing cell.

The frame graph is a tree rooted at the camera: the mandrel and the two
needle drivers hang off it directly, the needle hangs off whichever driver
holds it, and the static registrations (robot bases, the mandrel holder's
effector-to-mandrel transform) are carried along for completeness. Robots
are ideal Cartesian pose integrators; their dynamics live entirely in the
increments the servo loop feeds through ``move_*``.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from ..errors import FrameMismatch, StitchcellError
from ..geometry.pose import VARYING, FrameId, FramedPose, Pose, compose
from ..lfd.demonstration import (
    GRIPPER_CLOSED,
    GRIPPER_OPEN,
    HOLDER_A,
    HOLDER_B,
)

ROBOT_A = "A"
ROBOT_B = "B"
ROBOT_MANDREL = "M"


class HandOverViolation(StitchcellError):
    """Holder changed hands without both jaws closed."""


def _driver_frame(robot: str) -> FrameId:
    return FrameId.driver(robot)


@dataclass
class CellState:
    """Snapshot of every tracked frame plus the discrete cycle state."""

    cx_m: FramedPose                  # camera -> mandrel
    cx_da: FramedPose                 # camera -> driver A
    cx_db: FramedPose                 # camera -> driver B
    grip: FramedPose                  # holder's driver -> needle (true)
    grip_params: np.ndarray           # true (dx, rx, ry, rz) vs nominal grip
    cx_s0: FramedPose | None = None   # registered station (camera -> s0)
    registrations: dict = field(default_factory=dict)
    gripper_a: str = GRIPPER_CLOSED
    gripper_b: str = GRIPPER_OPEN
    holder: str = HOLDER_A
    primitive_index: int = 0
    slot_index: int = 0
    tension: float = 0.0
    clock: float = 0.0

    def __post_init__(self):
        self.grip_params = np.asarray(self.grip_params, dtype=float).reshape(4)
        self.check()

    # frame graph ------------------------------------------------------------
    @property
    def holder_robot(self) -> str:
        return ROBOT_A if self.holder == HOLDER_A else ROBOT_B

    def driver(self, robot: str) -> FramedPose:
        if robot == ROBOT_A:
            return self.cx_da
        if robot == ROBOT_B:
            return self.cx_db
        raise KeyError(f"unknown driver robot {robot!r}")

    @property
    def cx_n(self) -> FramedPose:
        """Camera-frame needle pose through the holding driver."""
        return compose(self.driver(self.holder_robot), self.grip)

    def check(self) -> None:
        for g in (self.gripper_a, self.gripper_b):
            if g not in (GRIPPER_OPEN, GRIPPER_CLOSED):
                raise StitchcellError(f"bad gripper value {g!r}")
        if self.holder not in (HOLDER_A, HOLDER_B):
            raise StitchcellError(f"bad holder value {self.holder!r}")
        cam = FrameId.camera()
        for fp, child in ((self.cx_m, FrameId.mandrel()),
                          (self.cx_da, _driver_frame(ROBOT_A)),
                          (self.cx_db, _driver_frame(ROBOT_B))):
            if fp.parent != cam or fp.child != child:
                raise FrameMismatch(f"expected {cam}->{child}, got {fp.parent}->{fp.child}")
        if self.grip.parent != _driver_frame(self.holder_robot):
            raise FrameMismatch(
                f"grip parent {self.grip.parent} does not match holder {self.holder}"
            )
        holder_jaw = self.gripper_a if self.holder == HOLDER_A else self.gripper_b
        if holder_jaw != GRIPPER_CLOSED:
            raise StitchcellError("holding driver must keep its jaws closed")

    # robot motion -----------------------------------------------------------
    def advance(self, dt: float) -> None:
        self.clock += dt

    def _stamped(self, parent: FrameId, child: FrameId, pose: Pose) -> FramedPose:
        return FramedPose(parent, child, pose, VARYING, self.clock)

    def move_driver(self, robot: str, increment: Pose) -> None:
        cur = self.driver(robot)
        fp = self._stamped(cur.parent, cur.child, cur.pose * increment)
        if robot == ROBOT_A:
            self.cx_da = fp
        else:
            self.cx_db = fp

    def move_mandrel(self, increment: Pose) -> None:
        self.cx_m = self._stamped(self.cx_m.parent, self.cx_m.child,
                                  self.cx_m.pose * increment)

    def set_mandrel(self, pose: Pose) -> None:
        self.cx_m = self._stamped(self.cx_m.parent, self.cx_m.child, pose)

    # grippers and hand-over ---------------------------------------------------
    def set_gripper(self, robot: str, value: str) -> None:
        if value not in (GRIPPER_OPEN, GRIPPER_CLOSED):
            raise StitchcellError(f"bad gripper value {value!r}")
        if robot == ROBOT_A:
            self.gripper_a = value
        elif robot == ROBOT_B:
            self.gripper_b = value
        else:
            raise KeyError(f"unknown driver robot {robot!r}")

    def hand_over(self, new_holder: str, new_grip: FramedPose,
                  new_params: np.ndarray) -> None:
        """Transfer the needle; legal only while both jaws are closed."""
        if not (self.gripper_a == GRIPPER_CLOSED and self.gripper_b == GRIPPER_CLOSED):
            raise HandOverViolation(
                f"hand-over with jaws A={self.gripper_a} B={self.gripper_b}"
            )
        robot = ROBOT_A if new_holder == HOLDER_A else ROBOT_B
        if new_grip.parent != _driver_frame(robot):
            raise FrameMismatch(
                f"new grip parent {new_grip.parent} does not match {new_holder}"
            )
        self.holder = new_holder
        self.grip = new_grip
        self.grip_params = np.asarray(new_params, dtype=float).reshape(4)

    def set_grip(self, grip: FramedPose, params: np.ndarray) -> None:
        """Re-seat the needle in the current holder (operator intervention)."""
        if grip.parent != _driver_frame(self.holder_robot):
            raise FrameMismatch("grip parent must match the current holder")
        self.grip = grip
        self.grip_params = np.asarray(params, dtype=float).reshape(4)

    # rollback ----------------------------------------------------------------
    def snapshot(self) -> "CellState":
        return replace(
            self,
            registrations=dict(self.registrations),
            grip_params=self.grip_params.copy(),
        )
