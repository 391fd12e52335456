"""Mandrel designs: the slotted fixture that presents each stitch site.

A design is a surface profile (cylinder or tapered cylinder) plus an ordered
ring of slot frames on that surface. Slot frames follow the convention used
throughout the package: x along the surface generator, y along the stent
wire (circumferential), z the outward surface normal. Axial coordinates are
measured from the mandrel mid-plane, so a design of length L spans
[-L/2, +L/2] along the mandrel x axis.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from ..errors import InvalidProfile, UnknownSlot
from ..geometry.pose import FrameId, FramedPose, Pose

_PROFILE_TYPES = ("cylinder", "tapered")


@dataclass(frozen=True)
class MandrelProfile:
    """Solid of revolution about the mandrel x axis.

    ``diameters_mm`` holds one value for a cylinder and the two end
    diameters (at -L/2 and +L/2) for a tapered cylinder.
    """

    type: str = "cylinder"
    diameters_mm: tuple = (44.0,)
    length_mm: float = 100.0

    def __post_init__(self):
        if self.type not in _PROFILE_TYPES:
            raise InvalidProfile(f"unknown profile type {self.type!r}")
        d = tuple(float(v) for v in self.diameters_mm)
        object.__setattr__(self, "diameters_mm", d)
        want = 1 if self.type == "cylinder" else 2
        if len(d) != want:
            raise InvalidProfile(
                f"{self.type} profile needs {want} diameter(s), got {len(d)}"
            )
        if any(v <= 0.0 for v in d) or self.length_mm <= 0.0:
            raise InvalidProfile("dimensions must be positive")

    def radius_at(self, axial_mm: float) -> float:
        """Surface radius at an axial station (linear for tapered)."""
        half = 0.5 * self.length_mm
        if not (-half - 1e-9 <= axial_mm <= half + 1e-9):
            raise InvalidProfile(
                f"axial station {axial_mm} mm outside [-{half}, {half}]"
            )
        if self.type == "cylinder":
            return 0.5 * self.diameters_mm[0]
        r0, r1 = 0.5 * self.diameters_mm[0], 0.5 * self.diameters_mm[1]
        w = (axial_mm + half) / self.length_mm
        return r0 + (r1 - r0) * w

    @property
    def slope(self) -> float:
        """dr/dx of the surface generator (0 for a cylinder)."""
        if self.type == "cylinder":
            return 0.0
        return (0.5 * self.diameters_mm[1] - 0.5 * self.diameters_mm[0]) / self.length_mm


def slot_frame(profile: MandrelProfile, angle_deg: float, axial_mm: float) -> Pose:
    """Slot frame on the surface at (angle about x, axial station).

    x follows the surface generator (sloped on a taper), y the circumferential
    wire direction, z the outward normal. Angle 0 puts the slot on the -y side
    of the mandrel, so a cylinder reproduces the recording-side convention.
    """
    g = math.radians(angle_deg)
    radial = np.array([0.0, -math.cos(g), math.sin(g)])
    wire = np.array([0.0, math.sin(g), math.cos(g)])
    tau = math.atan(profile.slope)
    ct, st = math.cos(tau), math.sin(tau)
    gen = ct * np.array([1.0, 0.0, 0.0]) + st * radial
    normal = -st * np.array([1.0, 0.0, 0.0]) + ct * radial
    T = np.eye(4)
    T[:3, :3] = np.column_stack([gen, wire, normal])
    T[:3, 3] = axial_mm * np.array([1.0, 0.0, 0.0]) + profile.radius_at(axial_mm) * radial
    return Pose.from_matrix(T)


@dataclass
class MandrelDesign:
    """One stent-graft fixture: profile, slot ring, stent peak sites."""

    id: str
    profile: MandrelProfile
    slots: list[FramedPose]            # m -> s_i, constant transforms
    slot_width_mm: float = 2.0
    stent_peaks: list[Pose] = field(default_factory=list)  # mandrel frame

    def __post_init__(self):
        self.validate()

    @property
    def n_slots(self) -> int:
        return len(self.slots)

    def slot(self, i: int) -> FramedPose:
        if not (0 <= i < len(self.slots)):
            raise UnknownSlot(f"design {self.id!r} has no slot {i}")
        return self.slots[i]

    def validate(self) -> None:
        if self.slot_width_mm <= 0.0:
            raise InvalidProfile("slot width must be positive")
        half = 0.5 * self.profile.length_mm
        for k, fp in enumerate(self.slots):
            if fp.parent != FrameId.mandrel() or fp.child != FrameId.slot(k):
                raise InvalidProfile(
                    f"slot {k} must be tagged m->s{k}, got {fp.parent}->{fp.child}"
                )
            t = fp.pose.t
            if abs(t[0]) > half + 1e-6:
                raise InvalidProfile(f"slot {k} lies off the mandrel axially")
            r_here = self.profile.radius_at(float(np.clip(t[0], -half, half)))
            radial = float(np.hypot(t[1], t[2]))
            if abs(radial - r_here) > 1e-6:
                raise InvalidProfile(
                    f"slot {k} origin off the surface by {radial - r_here:.3g} mm"
                )
            # outward normal of the surface at the slot, tilted on a taper
            out = np.array([0.0, t[1] / radial, t[2] / radial])
            tau = math.atan(self.profile.slope)
            normal = -math.sin(tau) * np.array([1.0, 0.0, 0.0]) + math.cos(tau) * out
            if float(np.dot(fp.pose.rotation_matrix()[:, 2], normal)) < 1.0 - 1e-9:
                raise InvalidProfile(f"slot {k} z axis is not the surface normal")


def make_design(
    design_id: str,
    profile: MandrelProfile,
    n_slots: int = 10,
    slot_axial_mm: float = 0.0,
    slot_width_mm: float = 2.0,
    peak_every: int = 2,
) -> MandrelDesign:
    """Design with an evenly spaced slot ring at one axial station.

    Stent peaks sit at every ``peak_every``-th slot; the slots between them
    are the mid-strut sites, matching a ring of n_slots/peak_every apexes.
    """
    if n_slots < 1:
        raise InvalidProfile("need at least one slot")
    step = 360.0 / n_slots
    slots = [
        FramedPose.constant(
            FrameId.mandrel(), FrameId.slot(i),
            slot_frame(profile, step * i, slot_axial_mm),
        )
        for i in range(n_slots)
    ]
    peaks = [slots[i].pose for i in range(0, n_slots, peak_every)]
    return MandrelDesign(
        id=design_id,
        profile=profile,
        slots=slots,
        slot_width_mm=slot_width_mm,
        stent_peaks=peaks,
    )


def shipped_designs() -> dict:
    """The four example fixtures (outer diameters 44, 40, 30, 30 mm)."""
    specs = {
        "A": (44.0, 100.0),
        "B": (40.0, 90.0),
        "C": (30.0, 80.0),
        "D": (30.0, 70.0),
    }
    return {
        name: make_design(name, MandrelProfile("cylinder", (d,), length))
        for name, (d, length) in specs.items()
    }


# ---------------------------------------------------------------------------
# design files

def _pose_dict(pose: Pose) -> dict:
    alpha, beta, theta = pose.euler_deg()
    return {"xyz": [float(v) for v in pose.t], "euler_deg": [alpha, beta, theta]}


def _pose_from(d: dict) -> Pose:
    return Pose.from_euler_deg(d["xyz"], d["euler_deg"])


def save_design(design: MandrelDesign, path) -> None:
    doc = {
        "id": design.id,
        "profile": {
            "type": design.profile.type,
            "diameters_mm": list(design.profile.diameters_mm),
            "length_mm": design.profile.length_mm,
        },
        "slots": [
            dict(_pose_dict(fp.pose), parent=fp.parent.tag(), child=fp.child.tag())
            for fp in design.slots
        ],
        "slot_width_mm": design.slot_width_mm,
        "stent_peaks": [_pose_dict(p) for p in design.stent_peaks],
    }
    with open(path, "w") as f:
        json.dump(doc, f, indent=1)


def load_design(path) -> MandrelDesign:
    with open(path) as f:
        doc = json.load(f)
    profile = MandrelProfile(
        type=doc["profile"]["type"],
        diameters_mm=tuple(doc["profile"]["diameters_mm"]),
        length_mm=float(doc["profile"]["length_mm"]),
    )
    slots = [
        FramedPose.constant(FrameId.mandrel(), FrameId.slot(i), _pose_from(rec))
        for i, rec in enumerate(doc["slots"])
    ]
    return MandrelDesign(
        id=str(doc["id"]),
        profile=profile,
        slots=slots,
        slot_width_mm=float(doc.get("slot_width_mm", 2.0)),
        stent_peaks=[_pose_from(rec) for rec in doc.get("stent_peaks", [])],
    )
