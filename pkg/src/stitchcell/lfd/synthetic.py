"""Synthetic bimanual sewing demonstrations.

Builds recordings of the five-primitive stitch cycle with shaped
cross-demonstration variability: wide translational scatter mid-way through
free-space transfers, a per-demonstrator needle-plane tilt while the needle
is inside the fabric, and near-zero scatter at contact events. The scatter is
carried by a fixed zero-mean spread pattern across the demonstration set, so
the per-sample variance seen after alignment is controlled rather than left
to sampling luck, and the set mean stays on the nominal cycle.

All paths are constructed in the taught slot frame (x along the mandrel
generator, y along the stent wire, z the outward surface normal, mm) and
exported in camera frame, which is what the recording pipeline would see.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.interpolate import CubicSpline

from ..geometry.pose import (
    Pose,
    perturbation_pose,
    quat_from_axis_angle,
    quat_from_rotvec,
    quat_mul,
    quat_slerp,
)
from .demonstration import Demonstration, PRIMITIVE_TABLE

_X = np.array([1.0, 0.0, 0.0])
_Y = np.array([0.0, 1.0, 0.0])
_Z = np.array([0.0, 0.0, 1.0])


def smoothstep(s) -> np.ndarray:
    s = np.clip(s, 0.0, 1.0)
    return s * s * (3.0 - 2.0 * s)


def spread_pattern(n: int) -> np.ndarray:
    """Zero-mean, unit-population-variance coefficients, one per demo.

    Ordered so the first demonstration carries the smallest offset; downstream
    alignment uses demo 0 as the warp reference, which keeps the reference
    timeline close to the nominal cycle.
    """
    if n < 2:
        return np.zeros(n)
    raw = np.linspace(-1.0, 1.0, n)
    order = np.argsort(np.abs(raw), kind="stable")
    c = raw[order]
    c = c - c.mean()
    return c / c.std()


def grip_from_contact(chi_deg: float, radius_mm: float = 4.0) -> Pose:
    """Needle-in-driver transform for jaws closed at arc angle chi.

    The driver frame sits at the contact point: x tangent to the arc, y along
    the arc plane normal, z from the contact point toward the arc centre.
    """
    chi = math.radians(chi_deg)
    c, s = math.cos(chi), math.sin(chi)
    R = np.column_stack([np.array([-s, 0.0, c]), _Y, np.array([-c, 0.0, -s])])
    T = np.eye(4)
    T[:3, :3] = R
    T[:3, 3] = radius_mm * np.array([c, 0.0, s])
    return Pose.from_matrix(T).inverse()


def perturb_grip(grip: Pose, dx_mm: float, rot_deg) -> Pose:
    """Apply a slide-and-tilt offset on the driver side of a grip."""
    return perturbation_pose(dx_mm, rot_deg) * grip


def slot_in_mandrel(radius_mm: float, angle_deg: float = 0.0, axial_mm: float = 0.0) -> Pose:
    """Slot frame for a stitch site on the mandrel surface.

    The mandrel frame has x along the cylinder axis and the slot-0 site on the
    -y side, so that the slot's wire direction maps to the mandrel z axis and
    a needle swing about the wire stays a pure yaw in mandrel coordinates.
    """
    g = math.radians(angle_deg)
    outward = np.array([0.0, -math.cos(g), math.sin(g)])
    wire = np.array([0.0, math.sin(g), math.cos(g)])
    R = np.column_stack([_X, wire, outward])
    T = np.eye(4)
    T[:3, :3] = R
    T[:3, 3] = axial_mm * _X + radius_mm * outward
    return Pose.from_matrix(T)


def camera_mandrel_pose(depth_mm: float = 550.0, view_tilt_deg: float = 30.0,
                        slot_radius_mm: float = 22.0) -> Pose:
    """Mandrel under the camera, axis horizontal in the image.

    The camera views slot 0 obliquely: the stent-wire direction sits
    ``view_tilt_deg`` away from the optical axis, so the needle swing plane
    is seen well off edge-on and its projected arc does not fold onto
    itself (at 90 deg the wire would lie in the image plane, a degenerate
    view for needle pose scoring). The boresight is aimed at the slot-0
    ring, radius ``slot_radius_mm`` off the mandrel axis, which centers the
    sewing area for a long-lens needle camera sharing the mount.
    """
    eta = math.radians(view_tilt_deg)
    c0 = _X
    c1 = np.array([0.0, math.cos(eta), math.sin(eta)])
    c2 = np.array([0.0, -math.sin(eta), math.cos(eta)])
    T = np.eye(4)
    T[:3, :3] = np.column_stack([c0, c1, c2])
    T[:3, 3] = np.array([0.0, slot_radius_mm * math.cos(eta), depth_mm])
    return Pose.from_matrix(T)


def needle_slot_pose(psi_deg: float, center_mm, tilt_deg: float = 0.0,
                     tilt_axis=_X) -> Pose:
    """Needle pose in the slot frame: swing angle psi about the wire axis.

    At psi = 0 the arc opens upward spanning surface angles [0, 180) deg; a
    point at arc angle phi sits at surface angle phi - psi. A nonzero tilt
    leans the arc plane about `tilt_axis` (applied in slot coordinates).
    """
    q = quat_from_axis_angle(_Y, math.radians(psi_deg))
    if tilt_deg != 0.0:
        q = quat_mul(quat_from_axis_angle(np.asarray(tilt_axis, float),
                                          math.radians(tilt_deg)), q)
    return Pose(t=np.asarray(center_mm, dtype=float), q=q)


def _lerp_pose(a: Pose, b: Pose, w: float) -> Pose:
    return Pose(t=(1.0 - w) * a.t + w * b.t, q=quat_slerp(a.q, b.q, w))


@dataclass(frozen=True)
class DemoProfile:
    """Nominal stitch-cycle geometry and variability calibration."""

    durations_s: tuple = (15.0, 6.0, 8.0, 4.0, 8.0)
    sample_rate_hz: float = 20.0
    duration_jitter: float = 0.07

    needle_radius_mm: float = 4.0
    stitch_size_mm: float = 4.10
    ready_center_mm: tuple = (10.0, 0.0, 90.0)
    hover_center_mm: tuple = (-8.0, 0.0, 70.0)
    clear_lift_mm: float = 18.0        # straight climb after the tail is free
    psi_grasp_deg: float = 150.0       # swing at hand-over to the second arm
    psi_exit_deg: float = 322.0        # swing when the trailing tip is clear

    chi_a_deg: float = 150.0           # arm A jaw contact angle on the arc
    chi_b_deg: float = 10.0
    grip_jitter_deg: float = 1.0
    grip_jitter_mm: float = 0.3

    park_a_mm: tuple = (-30.0, -20.0, 60.0)
    park_b_mm: tuple = (40.0, 30.0, 70.0)

    # spread-pattern amplitudes: translational scatter on transfers (m) and
    # arc-plane tilt scatter while the needle is in the fabric (deg)
    travel_spread_m: float = 0.085
    lift_spread_m: float = 0.080
    approach_b_spread_m: float = 0.078
    approach_a_spread_m: float = 0.075
    return_spread_m: float = 0.080
    pierce_tilt_deg: float = 7.0
    tilt_axis: tuple = (1.0, 0.0, 0.0)

    wobble_mm: float = 0.3             # smooth per-demo hand tremor
    wobble_deg: float = 0.15

    mandrel_radius_mm: float = 22.0
    mandrel_depth_mm: float = 550.0
    slot_angle_deg: float = 0.0
    slot_axial_mm: float = 0.0

    @property
    def pierce_center_mm(self) -> np.ndarray:
        half = 0.5 * self.stitch_size_mm
        cz = math.sqrt(self.needle_radius_mm ** 2 - half * half)
        return np.array([0.0, 0.0, cz])


def phase_windows() -> dict:
    """Sub-segment windows, as fractions of each primitive's aligned timeline.

    ``pierce`` windows cover needle-in-fabric motion (tight following needed);
    ``approach`` windows cover free-space transfers. Used by diagnostics and
    tests to check the speed-ratio profile against the motion phase.
    """
    return {
        "pierce": [(1, 0.68, 0.97), (3, 0.02, 0.30)],
        "approach": [(1, 0.08, 0.55), (2, 0.15, 0.85), (3, 0.62, 0.93),
                     (4, 0.15, 0.85), (5, 0.15, 0.85)],
    }


def _smooth_series(rng: np.random.Generator, n: int, dt: float, sigma: float,
                   spacing_s: float = 1.5) -> np.ndarray:
    """Smooth zero-mean noise: a cubic spline through coarse gaussian knots."""
    if sigma == 0.0 or n < 2:
        return np.zeros(n)
    knots = max(4, int(round(n * dt / spacing_s)) + 2)
    xk = np.linspace(0.0, n - 1.0, knots)
    yk = rng.normal(0.0, sigma, knots)
    return CubicSpline(xk, yk)(np.arange(n))


def _segment_window(bounds: list, n_total: int) -> np.ndarray:
    """sin^2 ramp per segment: zero exactly at every segment boundary."""
    w = np.zeros(n_total)
    for k in range(5):
        i0, i1 = bounds[k], bounds[k + 1]
        m = i1 - i0
        s = (np.arange(m) + 0.5) / m
        w[i0:i1] = np.sin(np.pi * s) ** 2
    return w


@dataclass
class _Scatter:
    """Per-demo smooth wobble streams for one rigid body."""

    t: np.ndarray  # (N, 3) mm
    r: np.ndarray  # (N, 3) deg, rotation-vector components

    @staticmethod
    def draw(rng, n, dt, sig_mm, sig_deg) -> "_Scatter":
        t = np.column_stack([_smooth_series(rng, n, dt, sig_mm) for _ in range(3)])
        r = np.column_stack([_smooth_series(rng, n, dt, sig_deg) for _ in range(3)])
        return _Scatter(t, r)

    def pose(self, i: int, gain: float) -> Pose:
        rv = np.radians(self.r[i] * gain)
        return Pose(t=self.t[i] * gain, q=quat_from_rotvec(rv))


def generate_demonstrations(profile: DemoProfile = DemoProfile(), n_demos: int = 5,
                            seed: int = 0) -> list[Demonstration]:
    """Generate one set of stitch-cycle demonstrations of a single slot."""
    coeffs = spread_pattern(n_demos)
    children = np.random.SeedSequence(seed).spawn(n_demos)
    return [
        _build_one(profile, np.random.default_rng(children[d]), float(coeffs[d]))
        for d in range(n_demos)
    ]


def _build_one(profile: DemoProfile, rng: np.random.Generator, coeff: float) -> Demonstration:
    p = profile
    dt = 1.0 / p.sample_rate_hz
    counts = [
        max(8, int(round(p.durations_s[k] * p.sample_rate_hz
                         * (1.0 + p.duration_jitter * rng.uniform(-1.0, 1.0)))))
        for k in range(5)
    ]
    bounds = [0]
    for c in counts:
        bounds.append(bounds[-1] + c)
    n = bounds[-1]
    times = np.arange(n) * dt
    win = _segment_window(bounds, n)

    scat_n = _Scatter.draw(rng, n, dt, p.wobble_mm, p.wobble_deg)
    scat_a = _Scatter.draw(rng, n, dt, 2.0 * p.wobble_mm, 2.0 * p.wobble_deg)
    scat_b = _Scatter.draw(rng, n, dt, 2.0 * p.wobble_mm, 2.0 * p.wobble_deg)

    grip_a = perturb_grip(grip_from_contact(p.chi_a_deg, p.needle_radius_mm),
                          rng.normal(0.0, p.grip_jitter_mm),
                          rng.normal(0.0, p.grip_jitter_deg, 3))
    grip_b = perturb_grip(grip_from_contact(p.chi_b_deg, p.needle_radius_mm),
                          rng.normal(0.0, p.grip_jitter_mm),
                          rng.normal(0.0, p.grip_jitter_deg, 3))
    inv_a, inv_b = grip_a.inverse(), grip_b.inverse()

    ready = np.asarray(p.ready_center_mm, float)
    pierce = p.pierce_center_mm
    hover = np.asarray(p.hover_center_mm, float)
    tilt_axis = np.asarray(p.tilt_axis, float)

    # direction (slot frame) along which the transfer scatter is applied, per
    # primitive: the learned stream's frame x axis, so the variance shows up
    # on a single translational channel after projection
    psi_hover = p.psi_exit_deg
    dir4 = np.array([math.cos(math.radians(psi_hover)), 0.0,
                     -math.sin(math.radians(psi_hover))])
    pattern_dir = {1: _X, 2: _X, 3: _X, 4: dir4, 5: _X}

    def tilt_at(k: int, s: float) -> float:
        """Arc-plane tilt carried by this demo, ramping in late in the pierce
        approach and out once the trailing tip is free."""
        if k == 1:
            if s < 0.60:
                return 0.0
            return coeff * p.pierce_tilt_deg * float(smoothstep((s - 0.60) / 0.06))
        if k == 2:
            return coeff * p.pierce_tilt_deg
        if k == 3:
            if s < 0.35:
                return coeff * p.pierce_tilt_deg
            return coeff * p.pierce_tilt_deg * float(1.0 - smoothstep((s - 0.35) / 0.20))
        return 0.0

    def pattern_mm(k: int, s: float) -> float:
        """Transfer-scatter amplitude (mm) for this demo at segment fraction s.

        Approach and return scatter dies by s = 0.8: the demonstrator settles
        onto the terminal corridor well before the grasp or park pose, so the
        encoded endpoint stays tight.
        """
        if k == 1 and s < 0.60:
            a = p.travel_spread_m * math.sin(math.pi * s / 0.60) ** 2
        elif k == 2:
            a = p.approach_b_spread_m * math.sin(math.pi * min(s / 0.8, 1.0)) ** 2
        elif k == 3 and s >= 0.70:
            a = p.lift_spread_m * math.sin(math.pi * (s - 0.70) / 0.30) ** 2
        elif k == 4:
            a = p.approach_a_spread_m * math.sin(math.pi * min(s / 0.8, 1.0)) ** 2
        elif k == 5:
            a = p.return_spread_m * math.sin(math.pi * min(s / 0.8, 1.0)) ** 2
        else:
            return 0.0
        return coeff * a * 1000.0

    def needle_nominal(k: int, s: float) -> Pose:
        if k == 1:
            if s < 0.60:
                w = float(smoothstep(s / 0.60))
                return needle_slot_pose(0.0, ready + w * (pierce - ready))
            v = float(smoothstep((s - 0.60) / 0.40))
            return needle_slot_pose(p.psi_grasp_deg * v, pierce,
                                    tilt_at(1, s), tilt_axis)
        if k == 2:
            return needle_slot_pose(p.psi_grasp_deg, pierce, tilt_at(2, s), tilt_axis)
        if k == 3:
            if s < 0.55:
                v = float(smoothstep(s / 0.55))
                psi = p.psi_grasp_deg + (p.psi_exit_deg - p.psi_grasp_deg) * v
                return needle_slot_pose(psi, pierce, tilt_at(3, s), tilt_axis)
            # climb straight out of the fabric before any lateral transfer so
            # the low-variance region extends well past the last tail crossing
            lifted = pierce + np.array([0.0, 0.0, p.clear_lift_mm])
            if s < 0.70:
                w = float(smoothstep((s - 0.55) / 0.15))
                return needle_slot_pose(p.psi_exit_deg, pierce + w * (lifted - pierce))
            u = float(smoothstep((s - 0.70) / 0.30))
            return needle_slot_pose(p.psi_exit_deg, lifted + u * (hover - lifted))
        if k == 4:
            return needle_slot_pose(p.psi_exit_deg, hover)
        u = float(smoothstep(s))
        return needle_slot_pose(p.psi_exit_deg + (360.0 - p.psi_exit_deg) * u,
                                hover + u * (ready - hover))

    # parked driver poses: orientations kept near the grasp orientation so the
    # relative pose to the needle stays well away from pitch singularities
    grasp_a_end = needle_nominal(1, 1.0 - 1e-9) * inv_a
    park_a = Pose(
        t=np.asarray(p.park_a_mm, float),
        q=quat_mul(quat_from_axis_angle(_Y, math.radians(30.0)),
                   (needle_slot_pose(p.psi_exit_deg, hover) * inv_a).q),
    )
    park_b = Pose(
        t=np.asarray(p.park_b_mm, float),
        q=quat_mul(quat_from_axis_angle(_Y, math.radians(-40.0)),
                   (needle_slot_pose(p.psi_grasp_deg, pierce) * inv_b).q),
    )
    grasp_b = needle_slot_pose(p.psi_grasp_deg, pierce) * inv_b
    pregrasp_b = Pose(t=grasp_b.t + 28.0 * (park_b.t - grasp_b.t)
                      / np.linalg.norm(park_b.t - grasp_b.t), q=grasp_b.q)
    regrasp_a = needle_slot_pose(p.psi_exit_deg, hover) * inv_a

    needle_poses: list[Pose] = []
    tool_a_poses: list[Pose] = []
    tool_b_poses: list[Pose] = []
    ga: list[str] = []
    gb: list[str] = []
    holder: list[str] = []

    b_p1_end = None
    a_p3_end = None
    b_p5_start = None

    for k in range(1, 6):
        i0, i1 = bounds[k - 1], bounds[k]
        m = i1 - i0
        grip_open_a, grip_open_b, who = _table_row(k)
        for j in range(m):
            i = i0 + j
            s = (j + 0.5) / m
            wob_n = scat_n.pose(i, float(win[i]))

            x_n = needle_nominal(k, s)
            # the transfer scatter rides on whichever body carries the learned
            # stream: the needle on 1/3/5, the approaching driver on 2/4
            pat_n = pattern_mm(k, s) if k in (1, 3, 5) else 0.0
            x_n = Pose(t=x_n.t + pat_n * pattern_dir[k] + wob_n.t,
                       q=quat_mul(wob_n.q, x_n.q))

            if k in (1, 2, 5):
                x_a = x_n * inv_a
            elif k == 3:
                w = float(smoothstep(min(s / 0.60, 1.0)))
                x_a = _lerp_pose(grasp_a_end, park_a, w)
                x_a = Pose(t=x_a.t + scat_a.pose(i, float(win[i])).t,
                           q=quat_mul(scat_a.pose(i, float(win[i])).q, x_a.q))
                a_p3_end = x_a
            else:  # k == 4
                w = float(smoothstep(s))
                x_a = _lerp_pose(a_p3_end, regrasp_a, w)
                x_a = Pose(t=x_a.t + pattern_mm(4, s) * pattern_dir[4]
                           + scat_a.pose(i, float(win[i])).t,
                           q=quat_mul(scat_a.pose(i, float(win[i])).q, x_a.q))

            if k in (3, 4):
                x_b = x_n * inv_b
            elif k == 1:
                if s < 0.80:
                    x_b = park_b
                else:
                    w = 0.25 * float(smoothstep((s - 0.80) / 0.20))
                    x_b = _lerp_pose(park_b, pregrasp_b, w)
                x_b = Pose(t=x_b.t + scat_b.pose(i, float(win[i])).t,
                           q=quat_mul(scat_b.pose(i, float(win[i])).q, x_b.q))
                b_p1_end = x_b
            elif k == 2:
                w = float(smoothstep(s))
                x_b = _lerp_pose(b_p1_end, grasp_b, w)
                x_b = Pose(t=x_b.t + pattern_mm(2, s) * _X
                           + scat_b.pose(i, float(win[i])).t,
                           q=quat_mul(scat_b.pose(i, float(win[i])).q, x_b.q))
            else:  # k == 5
                if b_p5_start is None:
                    b_p5_start = x_n * inv_b
                w = float(smoothstep(min(s / 0.60, 1.0)))
                x_b = _lerp_pose(b_p5_start, park_b, w)
                x_b = Pose(t=x_b.t + scat_b.pose(i, float(win[i])).t,
                           q=quat_mul(scat_b.pose(i, float(win[i])).q, x_b.q))

            needle_poses.append(x_n)
            tool_a_poses.append(x_a)
            tool_b_poses.append(x_b)
            ga.append(grip_open_a)
            gb.append(grip_open_b)
            holder.append(who)

    cam_m = camera_mandrel_pose(p.mandrel_depth_mm,
                                slot_radius_mm=p.mandrel_radius_mm)
    m_s = slot_in_mandrel(p.mandrel_radius_mm, p.slot_angle_deg, p.slot_axial_mm)
    cs = cam_m * m_s
    to_cam = lambda poses: [cs * x for x in poses]

    ready_pose = needle_slot_pose(0.0, ready)
    meta = {
        "needle_ready_slot": {"xyz": ready_pose.t.tolist(),
                              "euler_deg": list(ready_pose.euler_deg())},
        "chi_a_deg": p.chi_a_deg,
        "chi_b_deg": p.chi_b_deg,
        "grip_a": {"xyz": grip_a.t.tolist(), "euler_deg": list(grip_a.euler_deg())},
        "grip_b": {"xyz": grip_b.t.tolist(), "euler_deg": list(grip_b.euler_deg())},
        "pattern_coeff": coeff,
        "stitch_size_mm": p.stitch_size_mm,
        "needle_radius_mm": p.needle_radius_mm,
        "mandrel_radius_mm": p.mandrel_radius_mm,
        "sample_rate_hz": p.sample_rate_hz,
    }
    return Demonstration(
        times=times,
        tool_a=to_cam(tool_a_poses),
        tool_b=to_cam(tool_b_poses),
        needle=to_cam(needle_poses),
        gripper_a=ga,
        gripper_b=gb,
        holder=holder,
        camera_mandrel=cam_m,
        demo_slot=m_s,
        demo_slot_index=0,
        meta=meta,
    )


def _table_row(k: int) -> tuple:
    return PRIMITIVE_TABLE[k - 1]
