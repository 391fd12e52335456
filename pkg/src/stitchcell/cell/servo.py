"""Frame algebra of slot delivery and look-and-move servoing.

The four operations here are the cell's control arithmetic: register the
sewing station off slot 0, compute the mandrel move that presents slot i at
the station, convert a desired needle pose into a driver target through the
detected grip, and turn a pose error into a capped incremental command.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..errors import FrameMismatch, TargetUnobservable, UnknownSlot
from ..geometry.pose import (
    Frame,
    FrameId,
    FramedPose,
    Pose,
    compose,
    invert,
    pose_error,
)
from .mandrel import MandrelDesign


def _require(fp: FramedPose, parent_kind: str, child_kind: str, what: str) -> None:
    if fp.parent.kind != parent_kind or fp.child.kind != child_kind:
        raise FrameMismatch(
            f"{what} must be {parent_kind}->{child_kind}, got {fp.parent}->{fp.child}"
        )


def transplant(fp: FramedPose, parent: FrameId) -> FramedPose:
    """Re-express a learned transform at a delivered slot.

    A reference recorded relative to the demonstrated slot applies verbatim at
    any other slot once that slot occupies the station, so only the parent tag
    changes; the numbers do not.
    """
    if fp.parent.kind != parent.kind:
        raise FrameMismatch(
            f"transplant keeps the frame kind: {fp.parent} vs {parent}"
        )
    return FramedPose(parent, fp.child, fp.pose, fp.kind, fp.stamp)


def register_slot0(cx_m: FramedPose, mH_s0: FramedPose) -> FramedPose:
    """Camera pose of slot 0 at registration time: the sewing station."""
    _require(cx_m, Frame.CAMERA, Frame.MANDREL, "cx_m")
    _require(mH_s0, Frame.MANDREL, Frame.SLOT, "mH_s0")
    return compose(cx_m, mH_s0)


def mandrel_delivery_error(
    cx_m: FramedPose, cx_s0: FramedPose, mH_si: FramedPose
) -> FramedPose:
    """Mandrel-frame correction that brings slot i onto the station.

    Composing the current mandrel pose with the returned transform places
    slot i exactly at the registered slot-0 camera pose; for i = 0 with the
    mandrel still at its registration pose the result is the identity.
    """
    _require(cx_m, Frame.CAMERA, Frame.MANDREL, "cx_m")
    _require(cx_s0, Frame.CAMERA, Frame.SLOT, "cx_s0")
    _require(mH_si, Frame.MANDREL, Frame.SLOT, "mH_si")
    err = cx_m.pose.inverse() * cx_s0.pose * mH_si.pose.inverse()
    # an m -> m displacement: the slot tags differ by construction (the moved
    # mandrel's slot i lands on the registered slot-0 site)
    return FramedPose(FrameId.mandrel(), FrameId.mandrel(), err,
                      cx_m.kind, cx_m.stamp)


def delivery_error_sequence(
    design: MandrelDesign, cx_m: FramedPose, cx_s0: FramedPose
) -> list:
    """Eq-for-every-slot plan, computed once per registration.

    The per-slot corrections assume each is applied from the registration
    pose; the run loop recomputes against the live mandrel pose, this
    sequence is the offline itinerary.
    """
    return [
        mandrel_delivery_error(cx_m, cx_s0, design.slot(i))
        for i in range(design.n_slots)
    ]


def needle_to_driver_target(sx_n: FramedPose, dH_n: FramedPose) -> FramedPose:
    """Driver pose that realizes a desired needle pose through a known grip."""
    if sx_n.child != FrameId.needle():
        raise FrameMismatch(f"reference must target the needle, got {sx_n.child}")
    _require(dH_n, Frame.DRIVER, Frame.NEEDLE, "dH_n")
    return compose(sx_n, invert(dH_n))


@dataclass(frozen=True)
class ServoConfig:
    """Look-and-move gains and limits (per servo tick)."""

    gain: float = 0.5
    max_step_mm: float = 1.0
    max_step_deg: float = 2.0
    tol_mm: float = 0.1
    tol_deg: float = 0.1

    def __post_init__(self):
        if not (0.0 < self.gain <= 1.0):
            raise ValueError("gain must be in (0, 1]")
        if self.max_step_mm <= 0 or self.max_step_deg <= 0:
            raise ValueError("step caps must be positive")


@dataclass(frozen=True)
class ServoCommand:
    increment: Pose     # applied on the driver side: new = current * increment
    error: Pose         # full error, current -> desired
    converged: bool     # error inside tolerance before this command


def _scaled(err: Pose, gain: float, cap_mm: float, cap_deg: float) -> Pose:
    t = gain * err.t
    nt = float(np.linalg.norm(t))
    if nt > cap_mm:
        t = t * (cap_mm / nt)
    rv = gain * err.rotvec()
    nr = math.degrees(float(np.linalg.norm(rv)))
    if nr > cap_deg:
        rv = rv * (cap_deg / nr)
    return Pose.from_rotvec(rv, t)


def servo_step(
    current: FramedPose | None,
    desired: FramedPose,
    config: ServoConfig = ServoConfig(),
) -> ServoCommand:
    """One look-and-move increment toward the desired pose.

    The error is the relative pose from the current child frame to the
    desired one; the command scales it by the gain and clips translation and
    rotation against the per-tick caps. A lost observation raises
    TargetUnobservable so the caller can hold its last command.
    """
    if current is None:
        raise TargetUnobservable("current pose not observable this tick")
    err = pose_error(current, desired).pose
    converged = (
        err.translation_norm() < config.tol_mm
        and err.rotation_angle_deg() < config.tol_deg
    )
    return ServoCommand(
        increment=_scaled(err, config.gain, config.max_step_mm, config.max_step_deg),
        error=err,
        converged=converged,
    )
