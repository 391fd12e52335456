"""Rigid 6-d.o.f poses with frame tags.

Conventions used everywhere in the toolkit:

* translations in millimetres, angles in degrees at I/O boundaries,
  radians/quaternions internally;
* orientation stored as a unit quaternion (w, x, y, z), normalized after
  every operation;
* Euler angles (alpha, beta, theta) are intrinsic Z-Y-X:
  R = Rz(alpha) @ Ry(beta) @ Rx(theta).  Degenerate at |beta| = 90 deg
  (gimbal lock); extraction there returns theta = 0 and folds the lost
  degree of freedom into alpha;
* a ``FramedPose`` with parent p and child q is the pose of frame q
  expressed in frame p, so parent/child tags chain left to right under
  composition.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..errors import FrameMismatch

_UNIT_TOL = 1e-9


# ---------------------------------------------------------------------------
# quaternion primitives (scalar-first)

def quat_normalize(q: np.ndarray) -> np.ndarray:
    n = math.sqrt(float(q[0] * q[0] + q[1] * q[1] + q[2] * q[2] + q[3] * q[3]))
    if n == 0.0:
        raise ValueError("zero quaternion")
    return q / n


def quat_mul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    aw, ax, ay, az = a
    bw, bx, by, bz = b
    return np.array(
        [
            aw * bw - ax * bx - ay * by - az * bz,
            aw * bx + ax * bw + ay * bz - az * by,
            aw * by - ax * bz + ay * bw + az * bx,
            aw * bz + ax * by - ay * bx + az * bw,
        ]
    )


def quat_conj(q: np.ndarray) -> np.ndarray:
    return np.array([q[0], -q[1], -q[2], -q[3]])


def quat_rotate(q: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Rotate vector(s) v by quaternion q. v may be (3,) or (N, 3)."""
    w, x, y, z = q
    u = np.array([x, y, z])
    v = np.asarray(v, dtype=float)
    uv = np.cross(u, v)
    uuv = np.cross(u, uv)
    return v + 2.0 * (w * uv + uuv)


def quat_to_matrix(q: np.ndarray) -> np.ndarray:
    w, x, y, z = q
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
            [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
            [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
        ]
    )


def quat_from_matrix(R: np.ndarray) -> np.ndarray:
    """Shepperd's method: pick the numerically largest component first."""
    R = np.asarray(R, dtype=float)
    tr = R[0, 0] + R[1, 1] + R[2, 2]
    if tr > 0.0:
        s = math.sqrt(tr + 1.0) * 2.0
        q = np.array(
            [0.25 * s, (R[2, 1] - R[1, 2]) / s, (R[0, 2] - R[2, 0]) / s, (R[1, 0] - R[0, 1]) / s]
        )
    elif R[0, 0] >= R[1, 1] and R[0, 0] >= R[2, 2]:
        s = math.sqrt(1.0 + R[0, 0] - R[1, 1] - R[2, 2]) * 2.0
        q = np.array(
            [(R[2, 1] - R[1, 2]) / s, 0.25 * s, (R[0, 1] + R[1, 0]) / s, (R[0, 2] + R[2, 0]) / s]
        )
    elif R[1, 1] >= R[2, 2]:
        s = math.sqrt(1.0 + R[1, 1] - R[0, 0] - R[2, 2]) * 2.0
        q = np.array(
            [(R[0, 2] - R[2, 0]) / s, (R[0, 1] + R[1, 0]) / s, 0.25 * s, (R[1, 2] + R[2, 1]) / s]
        )
    else:
        s = math.sqrt(1.0 + R[2, 2] - R[0, 0] - R[1, 1]) * 2.0
        q = np.array(
            [(R[1, 0] - R[0, 1]) / s, (R[0, 2] + R[2, 0]) / s, (R[1, 2] + R[2, 1]) / s, 0.25 * s]
        )
    if q[0] < 0.0:
        q = -q
    return quat_normalize(q)


def quat_from_axis_angle(axis: np.ndarray, angle_rad: float) -> np.ndarray:
    axis = np.asarray(axis, dtype=float)
    axis = axis / np.linalg.norm(axis)
    h = 0.5 * angle_rad
    s = math.sin(h)
    return np.array([math.cos(h), axis[0] * s, axis[1] * s, axis[2] * s])


def quat_to_rotvec(q: np.ndarray) -> np.ndarray:
    """Rotation vector (axis * angle, radians)."""
    w = min(1.0, max(-1.0, float(q[0])))
    v = np.array([q[1], q[2], q[3]], dtype=float)
    s = np.linalg.norm(v)
    if s < 1e-12:
        return 2.0 * v  # small-angle: q ~ (1, r/2)
    angle = 2.0 * math.atan2(s, w)
    if angle > math.pi:
        angle -= 2.0 * math.pi
    return v / s * angle


def quat_from_rotvec(r: np.ndarray) -> np.ndarray:
    r = np.asarray(r, dtype=float)
    angle = float(np.linalg.norm(r))
    if angle < 1e-12:
        return quat_normalize(np.array([1.0, 0.5 * r[0], 0.5 * r[1], 0.5 * r[2]]))
    return quat_from_axis_angle(r / angle, angle)


def quat_slerp(a: np.ndarray, b: np.ndarray, w: float) -> np.ndarray:
    """Spherical interpolation between unit quaternions, shortest arc."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    dot = float(np.dot(a, b))
    if dot < 0.0:
        b = -b
        dot = -dot
    if dot > 1.0 - 1e-12:
        return quat_normalize(a + w * (b - a))
    omega = math.acos(min(1.0, dot))
    so = math.sin(omega)
    return quat_normalize(
        (math.sin((1.0 - w) * omega) / so) * a + (math.sin(w * omega) / so) * b
    )


def euler_zyx_deg_to_matrix(alpha: float, beta: float, theta: float) -> np.ndarray:
    """Intrinsic Z-Y-X rotation matrix from degrees."""
    a, b, c = math.radians(alpha), math.radians(beta), math.radians(theta)
    ca, sa = math.cos(a), math.sin(a)
    cb, sb = math.cos(b), math.sin(b)
    cc, sc = math.cos(c), math.sin(c)
    return np.array(
        [
            [ca * cb, ca * sb * sc - sa * cc, ca * sb * cc + sa * sc],
            [sa * cb, sa * sb * sc + ca * cc, sa * sb * cc - ca * sc],
            [-sb, cb * sc, cb * cc],
        ]
    )


def matrix_to_euler_zyx_deg(R: np.ndarray) -> tuple[float, float, float]:
    """Inverse of :func:`euler_zyx_deg_to_matrix`. At |beta| = 90 deg the
    decomposition is degenerate; theta is fixed at 0 there."""
    sb = -R[2, 0]
    cb = math.sqrt(max(0.0, R[2, 1] ** 2 + R[2, 2] ** 2))
    beta = math.atan2(sb, cb)
    if cb > 1e-9:
        alpha = math.atan2(R[1, 0], R[0, 0])
        theta = math.atan2(R[2, 1], R[2, 2])
    else:
        alpha = math.atan2(-R[0, 1], R[1, 1])
        theta = 0.0
    return math.degrees(alpha), math.degrees(beta), math.degrees(theta)


# ---------------------------------------------------------------------------
# Pose

@dataclass(frozen=True)
class Pose:
    """Rigid transform: translation (mm) plus unit quaternion (w, x, y, z)."""

    t: np.ndarray = field(default_factory=lambda: np.zeros(3))
    q: np.ndarray = field(default_factory=lambda: np.array([1.0, 0.0, 0.0, 0.0]))

    def __post_init__(self):
        t = np.array(self.t, dtype=float).reshape(3)
        q = quat_normalize(np.array(self.q, dtype=float).reshape(4))
        if q[0] < 0.0:
            q = -q  # canonical hemisphere, keeps equality checks simple
        t.flags.writeable = False
        q.flags.writeable = False
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "q", q)

    # constructors ---------------------------------------------------------
    @staticmethod
    def identity() -> "Pose":
        return Pose()

    @staticmethod
    def from_translation(x: float, y: float, z: float) -> "Pose":
        return Pose(t=np.array([x, y, z]))

    @staticmethod
    def from_euler_deg(xyz, euler_deg) -> "Pose":
        alpha, beta, theta = euler_deg
        R = euler_zyx_deg_to_matrix(alpha, beta, theta)
        return Pose(t=np.asarray(xyz, dtype=float), q=quat_from_matrix(R))

    @staticmethod
    def from_matrix(T: np.ndarray) -> "Pose":
        T = np.asarray(T, dtype=float)
        return Pose(t=T[:3, 3], q=quat_from_matrix(T[:3, :3]))

    @staticmethod
    def from_axis_angle_deg(axis, angle_deg: float, xyz=(0.0, 0.0, 0.0)) -> "Pose":
        return Pose(
            t=np.asarray(xyz, dtype=float),
            q=quat_from_axis_angle(np.asarray(axis, dtype=float), math.radians(angle_deg)),
        )

    @staticmethod
    def from_rotvec(rotvec_rad, xyz=(0.0, 0.0, 0.0)) -> "Pose":
        return Pose(t=np.asarray(xyz, dtype=float), q=quat_from_rotvec(np.asarray(rotvec_rad)))

    # views ------------------------------------------------------------------
    def to_matrix(self) -> np.ndarray:
        T = np.eye(4)
        T[:3, :3] = quat_to_matrix(self.q)
        T[:3, 3] = self.t
        return T

    def rotation_matrix(self) -> np.ndarray:
        return quat_to_matrix(self.q)

    def euler_deg(self) -> tuple[float, float, float]:
        return matrix_to_euler_zyx_deg(quat_to_matrix(self.q))

    def rotvec(self) -> np.ndarray:
        return quat_to_rotvec(self.q)

    # algebra ----------------------------------------------------------------
    def __mul__(self, other: "Pose") -> "Pose":
        return Pose(t=self.t + quat_rotate(self.q, other.t), q=quat_mul(self.q, other.q))

    def inverse(self) -> "Pose":
        qc = quat_conj(self.q)
        return Pose(t=-quat_rotate(qc, self.t), q=qc)

    def apply(self, points: np.ndarray) -> np.ndarray:
        """Transform one point (3,) or a stack (N, 3)."""
        return quat_rotate(self.q, points) + self.t

    # metrics ----------------------------------------------------------------
    def translation_norm(self) -> float:
        return float(np.linalg.norm(self.t))

    def rotation_angle_deg(self) -> float:
        w = min(1.0, max(-1.0, abs(float(self.q[0]))))
        return math.degrees(2.0 * math.acos(w))

    def is_close(self, other: "Pose", tol_mm: float = 1e-9, tol_deg: float = None) -> bool:
        if tol_deg is None:
            tol_deg = tol_mm
        delta = self.inverse() * other
        return delta.translation_norm() <= tol_mm and delta.rotation_angle_deg() <= tol_deg


def perturbation_pose(dx_mm: float, rot_deg) -> Pose:
    """Left-multiplier perturbation: slide dx along x, then rotate by fixed-axis
    X-Y-Z angles (degrees). Grip offsets and the needle search grid share this
    parameterisation."""
    rx, ry, rz = (float(v) for v in rot_deg)
    q = quat_mul(
        quat_from_axis_angle(np.array([1.0, 0.0, 0.0]), math.radians(rx)),
        quat_mul(
            quat_from_axis_angle(np.array([0.0, 1.0, 0.0]), math.radians(ry)),
            quat_from_axis_angle(np.array([0.0, 0.0, 1.0]), math.radians(rz)),
        ),
    )
    return Pose(t=np.array([dx_mm, 0.0, 0.0]), q=q)


# ---------------------------------------------------------------------------
# frames

class Frame:
    """Frame kinds; short tags follow the cell's naming (c, m, s_i, n, d, r, ee)."""

    CAMERA = "c"
    MANDREL = "m"
    SLOT = "s"
    NEEDLE = "n"
    DRIVER = "d"
    BASE = "r"
    EFFECTOR = "ee"
    NEEDLE_INITIAL = "n0"

    _INDEXED = {SLOT, DRIVER, BASE, EFFECTOR}


@dataclass(frozen=True)
class FrameId:
    kind: str
    index: int | str | None = None

    def __post_init__(self):
        if self.kind in Frame._INDEXED and self.index is None:
            raise ValueError(f"frame kind {self.kind!r} needs an index")
        if self.kind not in Frame._INDEXED and self.index is not None:
            raise ValueError(f"frame kind {self.kind!r} takes no index")

    @staticmethod
    def camera() -> "FrameId":
        return FrameId(Frame.CAMERA)

    @staticmethod
    def mandrel() -> "FrameId":
        return FrameId(Frame.MANDREL)

    @staticmethod
    def slot(i: int) -> "FrameId":
        return FrameId(Frame.SLOT, int(i))

    @staticmethod
    def needle() -> "FrameId":
        return FrameId(Frame.NEEDLE)

    @staticmethod
    def needle_initial() -> "FrameId":
        return FrameId(Frame.NEEDLE_INITIAL)

    @staticmethod
    def driver(robot: str) -> "FrameId":
        return FrameId(Frame.DRIVER, robot)

    @staticmethod
    def base(robot: str) -> "FrameId":
        return FrameId(Frame.BASE, robot)

    @staticmethod
    def effector(robot: str) -> "FrameId":
        return FrameId(Frame.EFFECTOR, robot)

    def tag(self) -> str:
        return self.kind if self.index is None else f"{self.kind}{self.index}"

    @staticmethod
    def from_tag(tag: str) -> "FrameId":
        if tag in (Frame.CAMERA, Frame.MANDREL, Frame.NEEDLE, Frame.NEEDLE_INITIAL):
            return FrameId(tag)
        for kind in (Frame.EFFECTOR, Frame.SLOT, Frame.DRIVER, Frame.BASE):
            if tag.startswith(kind) and len(tag) > len(kind):
                idx = tag[len(kind):]
                return FrameId(kind, int(idx) if idx.isdigit() else idx)
        raise ValueError(f"unknown frame tag {tag!r}")

    def __str__(self) -> str:
        return self.tag()


# ---------------------------------------------------------------------------
# framed poses

CONSTANT = "H"
VARYING = "x"


@dataclass(frozen=True)
class FramedPose:
    """Pose of frame ``child`` expressed in frame ``parent``.

    kind "H" marks transforms constant over a run, "x" marks time-varying
    poses; varying poses carry their sample time in seconds.
    """

    parent: FrameId
    child: FrameId
    pose: Pose
    kind: str = CONSTANT
    stamp: float | None = None

    def __post_init__(self):
        if self.kind not in (CONSTANT, VARYING):
            raise ValueError(f"kind must be {CONSTANT!r} or {VARYING!r}")

    @staticmethod
    def constant(parent: FrameId, child: FrameId, pose: Pose) -> "FramedPose":
        return FramedPose(parent, child, pose, CONSTANT, None)

    @staticmethod
    def varying(parent: FrameId, child: FrameId, pose: Pose, stamp: float) -> "FramedPose":
        return FramedPose(parent, child, pose, VARYING, float(stamp))


def _merged_stamp(a: FramedPose, b: FramedPose) -> float | None:
    stamps = [s for s in (a.stamp, b.stamp) if s is not None]
    return max(stamps) if stamps else None


def compose(a: FramedPose, b: FramedPose) -> FramedPose:
    """a<p->q> composed with b<q->r> gives <p->r>."""
    if a.child != b.parent:
        raise FrameMismatch(f"cannot chain {a.parent}->{a.child} with {b.parent}->{b.child}")
    kind = VARYING if (a.kind == VARYING or b.kind == VARYING) else CONSTANT
    return FramedPose(a.parent, b.child, a.pose * b.pose, kind, _merged_stamp(a, b))


def invert(a: FramedPose) -> FramedPose:
    return FramedPose(a.child, a.parent, a.pose.inverse(), a.kind, a.stamp)


def pose_error(current: FramedPose, desired: FramedPose) -> FramedPose:
    """Relative pose taking the current child frame onto the desired one.

    Both inputs must be expressed in the same observer frame; the result is
    identity exactly when current equals desired.
    """
    if current.parent != desired.parent:
        raise FrameMismatch(
            f"error needs a common observer: {current.parent} vs {desired.parent}"
        )
    kind = VARYING if (current.kind == VARYING or desired.kind == VARYING) else CONSTANT
    return FramedPose(
        current.child,
        desired.child,
        current.pose.inverse() * desired.pose,
        kind,
        _merged_stamp(current, desired),
    )


# ---------------------------------------------------------------------------
# serialization (shared pose record schema)

def framed_pose_to_dict(fp: FramedPose) -> dict:
    alpha, beta, theta = fp.pose.euler_deg()
    return {
        "t": fp.stamp,
        "xyz": [float(v) for v in fp.pose.t],
        "euler_deg": [alpha, beta, theta],
        "parent": fp.parent.tag(),
        "child": fp.child.tag(),
    }


def framed_pose_from_dict(d: dict) -> FramedPose:
    pose = Pose.from_euler_deg(d["xyz"], d["euler_deg"])
    parent = FrameId.from_tag(d["parent"])
    child = FrameId.from_tag(d["child"])
    stamp = d.get("t")
    if stamp is None:
        return FramedPose.constant(parent, child, pose)
    return FramedPose.varying(parent, child, pose, float(stamp))
