"""Closed-loop execution of the five-primitive stitch cycle.

The simulated cell advances on a 20 Hz camera clock with five servo
sub-ticks per frame. Each camera tick refreshes the believed mandrel pose
through the sensor stack, maps the current reference sample into a
camera-frame driver target (through the believed grip for needle-stream
primitives), and lets the active robot integrate capped servo increments
toward it. Playback follows the reference's speed-scheduled timestamps and
stalls whenever the tracking error exceeds the sample gate, so contact
phases wait for convergence instead of cutting corners.

Truth and belief are kept strictly apart: drivers know their own pose
exactly (proprioception), the mandrel is known only through its sensor, and
the needle is known only through the grip believed at the last detection or
hand-over. Punctures, wire clearance and stitch size are always evaluated
against the true state.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..errors import NoCandidateVisible, ThreadBreak
from ..geometry.pose import FrameId, FramedPose, Pose, perturbation_pose
from ..lfd.demonstration import (
    GRIPPER_CLOSED,
    GRIPPER_OPEN,
    HOLDER_A,
    HOLDER_B,
    PRIMITIVE_TABLE,
    h_to_pose,
)
from ..lfd.pipeline import pose_from_record, references_from_models
from ..lfd.reference import PrimitiveModel, ReferenceTrajectory
from ..lfd.synthetic import camera_mandrel_pose, grip_from_contact
from ..vision.camera import CameraModel
from ..vision.markers import MarkerAssembly
from ..vision.needle import (
    ClutterModel,
    NeedleModel,
    NeedleSearchSpace,
    decompose_grip,
    detect_needle,
    render_needle_features,
)
from .mandrel import MandrelDesign
from .noise import (
    MANDREL_MARKER_MOUNT,
    NoisePreset,
    PoseSensor,
    marker_backend,
    pose_level_backend,
)
from .noise import preset as noise_preset
from .servo import (
    ServoConfig,
    delivery_error_sequence,
    register_slot0,
    servo_step,
)
from .state import ROBOT_A, ROBOT_B, CellState

OUTCOME_SUCCESS = "Success"
OUTCOME_FAIL = "Fail"

CAUSE_HANDLING = "NeedleHandling"
CAUSE_MISSING = "StitchStentMissing"
CAUSE_TOUCHING = "NeedleStentTouching"
CAUSE_ENTANGLING = "NeedleThreadEntangling"
CAUSE_UNCLASSIFIED = "Unclassified"
FAILURE_CAUSES = (CAUSE_HANDLING, CAUSE_MISSING, CAUSE_TOUCHING,
                  CAUSE_ENTANGLING)

# which robot executes each primitive's learned stream
ACTIVE_ROBOT = {1: ROBOT_A, 2: ROBOT_B, 3: ROBOT_B, 4: ROBOT_A, 5: ROBOT_A}


@dataclass(frozen=True)
class LoopConfig:
    """Timing, gating, and stitch-evaluation constants of the run loop."""

    camera_hz: float = 20.0
    servo_substeps: int = 5
    # caps sized so sample-to-sample tracking stays in the linear regime
    servo: ServoConfig = field(default_factory=lambda: ServoConfig(
        max_step_mm=2.5, max_step_deg=5.0))
    # playback gating: stall while the tracking error exceeds the gate
    sample_gate_mm: float = 0.3
    sample_gate_deg: float = 0.6
    final_gate_mm: float = 0.12        # end poses feed grasps and punctures
    final_gate_deg: float = 0.25
    stall_budget_ticks: int = 12       # per mid-trajectory sample
    approach_budget_ticks: int = 120   # first sample: free-space travel
    final_budget_ticks: int = 60
    registration_ticks: int = 40
    # slot delivery
    delivery_tol_mm: float = 0.15
    delivery_tol_deg: float = 0.3
    delivery_budget_ticks: int = 600
    # freed drivers back away along the slot normal after releasing
    retreat_mm: float = 35.0
    # stent wire geometry in the slot frame and the stitch predicates
    wire_offset_mm: float = 0.3
    wire_radius_mm: float = 0.3
    touch_clearance_mm: float = 0.10
    # thread tension model
    tension_threshold: float = 1.0
    tension_ramp_per_mm: float = 0.1
    tension_break: float = 3.0
    pull_speed_mm_s: float = 20.0
    max_pull_mm: float = 40.0
    # hand-over grasp envelope relative to the grip search bounds
    grasp_envelope_scale: float = 1.25
    grasp_residual_mm: float = 2.5


@dataclass(frozen=True)
class StitchRecord:
    """Outcome of one attempted stitch."""

    slot_index: int
    outcome: str
    cause: str | None
    stitch_size_mm: float | None
    duration_s: float
    design_id: str = ""
    trial_index: int = 0

    def __post_init__(self):
        if self.outcome not in (OUTCOME_SUCCESS, OUTCOME_FAIL):
            raise ValueError(f"bad outcome {self.outcome!r}")
        if self.outcome == OUTCOME_SUCCESS:
            if self.stitch_size_mm is None or self.cause is not None:
                raise ValueError("success carries a size and no cause")
        else:
            if self.stitch_size_mm is not None or self.cause is None:
                raise ValueError("failure carries a cause and no size")


@dataclass
class CycleTrace:
    """Everything observed during one cycle, for classification and tests."""

    slot_index: int
    design_id: str = ""
    trial_index: int = 0
    events: list = field(default_factory=list)      # (clock, message)
    detection_failed: bool = False
    detection_params: np.ndarray | None = None
    grip_lost: bool = False
    entangled: bool = False
    entry: np.ndarray | None = None                 # slot-frame (x, y) at pierce-in
    exit: np.ndarray | None = None                  # slot-frame (x, y) at pierce-out
    min_clearance_mm: float = math.inf
    captured: bool = False
    touched: bool = False
    stitch_size_mm: float | None = None
    pull_mm: float | None = None
    stalls: int = 0
    forced_advances: int = 0
    duration_s: float = 0.0
    # true needle pose in the slot frame, recorded once per retired sample of
    # the needle-stream primitives: (primitive, sample index, Pose)
    needle_samples: list = field(default_factory=list)

    def log(self, clock: float, message: str) -> None:
        self.events.append((float(clock), message))

    @property
    def failed(self) -> bool:
        return (self.detection_failed or self.grip_lost or not self.captured
                or self.touched or self.entangled)


def classify_failure(trace: CycleTrace) -> str:
    """Deterministic cause from trace predicates, most specific first."""
    if trace.detection_failed or trace.grip_lost:
        return CAUSE_HANDLING
    if not trace.captured:
        return CAUSE_MISSING
    if trace.touched:
        return CAUSE_TOUCHING
    if trace.entangled:
        return CAUSE_ENTANGLING
    return CAUSE_UNCLASSIFIED


# ---------------------------------------------------------------------------
# stitch geometry on the mandrel surface

def wire_clearance_mm(points_slot: np.ndarray, slot_half_width_mm: float,
                      wire_offset_mm: float, wire_radius_mm: float) -> float:
    """Distance from the closest point to the exposed stent-wire surface.

    The wire shows through the slot as a segment along the slot y axis,
    raised ``wire_offset_mm`` above the fabric plane.
    """
    p = np.atleast_2d(points_slot)
    y = np.clip(p[:, 1], -slot_half_width_mm, slot_half_width_mm)
    d = np.sqrt(p[:, 0] ** 2 + (p[:, 1] - y) ** 2
                + (p[:, 2] - wire_offset_mm) ** 2)
    return float(np.min(d) - wire_radius_mm)


def stitch_captures_wire(entry_xy, exit_xy, slot_width_mm: float,
                         slot_half_width_mm: float) -> bool:
    """Whether the thread chord actually encloses the stent wire.

    Two conditions: the punctures straddle the wire plane (x = 0), and the
    chord midpoint stays within the slot width of the exposed wire segment.
    """
    if entry_xy is None or exit_xy is None:
        return False
    ex, ey = float(entry_xy[0]), float(entry_xy[1])
    xx, xy = float(exit_xy[0]), float(exit_xy[1])
    if ex * xx >= 0.0:
        return False
    mx, my = 0.5 * (ex + xx), 0.5 * (ey + xy)
    dy = max(0.0, abs(my) - slot_half_width_mm)
    return math.hypot(mx, dy) <= slot_width_mm


def surface_stitch_size_mm(design: MandrelDesign, slot_index: int,
                           entry_xy, exit_xy) -> float:
    """Geodesic length between the punctures along the mandrel surface."""
    slot = design.slot(slot_index).pose
    pts = slot.apply(np.array([[entry_xy[0], entry_xy[1], 0.0],
                               [exit_xy[0], exit_xy[1], 0.0]]))
    axial = pts[:, 0]
    theta = np.arctan2(pts[:, 1], pts[:, 2])
    dtheta = math.remainder(float(theta[1] - theta[0]), 2.0 * math.pi)
    half = 0.5 * float(design.profile.length_mm)
    r = 0.5 * (design.profile.radius_at(float(np.clip(axial[0], -half, half)))
               + design.profile.radius_at(float(np.clip(axial[1], -half, half))))
    return math.hypot(float(axial[1] - axial[0]), r * dtheta)


def reference_stitch_size_mm(references: list[ReferenceTrajectory],
                             models: list[PrimitiveModel]) -> float:
    """Stitch size encoded in the learned reference itself.

    Replays the retrieved needle paths of the pierce-in and pierce-out
    primitives in the taught slot frame and intersects the needle tips with
    the fabric plane, exactly like the executed-path evaluation.
    """
    meta = models[0].meta
    radius = float(meta.get("needle_radius_mm", 4.0))
    slot_inv = pose_from_record(models[0].demo_slot).inverse()

    def crossings(ref: ReferenceTrajectory, tip_x: float, downward: bool):
        found = []
        prev = None
        for h in ref.mu:
            p = (slot_inv * h_to_pose(h)).apply(np.array([tip_x, 0.0, 0.0]))
            if prev is not None:
                if downward and prev[2] > 0.0 >= p[2] or (
                        not downward and prev[2] < 0.0 <= p[2]):
                    lam = prev[2] / (prev[2] - p[2])
                    found.append(prev[:2] + lam * (p[:2] - prev[:2]))
            prev = p
        return found

    entry = crossings(references[0], radius, downward=True)
    exits = crossings(references[2], -radius, downward=False)
    if not entry or not exits:
        raise ValueError("reference paths never pierce the fabric plane")
    e, x = entry[0], exits[-1]
    return float(math.hypot(e[0] - x[0], e[1] - x[1]))


def _aim_view(target_t) -> Pose:
    """Rotation about the camera origin that centers a point on the axis.

    Models the long-lens inspection camera swivelled toward the needle
    presentation station; the returned pose maps view coordinates to the
    shared camera frame.
    """
    z = np.asarray(target_t, dtype=float)
    z = z / np.linalg.norm(z)
    up = np.array([0.0, 1.0, 0.0])
    if abs(float(z @ up)) > 0.99:
        up = np.array([1.0, 0.0, 0.0])
    x = np.cross(up, z)
    x /= np.linalg.norm(x)
    T = np.eye(4)
    T[:3, 0], T[:3, 1], T[:3, 2] = x, np.cross(z, x), z
    return Pose.from_matrix(T)


# ---------------------------------------------------------------------------
# the cell

@dataclass
class _Belief:
    """What the system thinks, as opposed to what is true."""

    mandrel: PoseSensor
    grips: dict                      # robot -> believed needle-in-driver Pose
    params: dict                     # robot -> believed (dx, rx, ry, rz)
    anchor_n0: Pose | None = None    # believed needle pose at cycle start


class SewingCell:
    """Deterministic three-robot sewing cell around one mandrel design."""

    def __init__(self, design: MandrelDesign, models: list[PrimitiveModel],
                 preset: NoisePreset | str = "none",
                 config: LoopConfig | None = None,
                 references: list[ReferenceTrajectory] | None = None,
                 seed: int = 0, camera: CameraModel | None = None,
                 mandrel_sensing: str = "pose"):
        self.design = design
        self.models = sorted(models, key=lambda m: m.primitive_index)
        if [m.primitive_index for m in self.models] != [1, 2, 3, 4, 5]:
            raise ValueError("need exactly the five primitive models")
        self.preset = noise_preset(preset) if isinstance(preset, str) else preset
        self.cfg = config if config is not None else LoopConfig()
        self.refs = (sorted(references, key=lambda r: r.primitive_index)
                     if references is not None
                     else references_from_models(self.models))
        self.rng = np.random.default_rng(seed)

        meta = self.models[0].meta
        self.needle_radius = float(meta.get("needle_radius_mm", 4.0))
        self.nominal_grip = {
            ROBOT_A: grip_from_contact(float(meta["chi_a_deg"]), self.needle_radius),
            ROBOT_B: grip_from_contact(float(meta["chi_b_deg"]), self.needle_radius),
        }
        self.demo_slot = pose_from_record(self.models[0].demo_slot)
        self.ready_slot = pose_from_record(self.models[0].needle_ready)
        cam_m = meta.get("camera_mandrel")
        station_mandrel = (pose_from_record(cam_m) if cam_m is not None
                           else camera_mandrel_pose(
                               550.0, 30.0, float(meta["mandrel_radius_mm"])))
        self.station_slot = station_mandrel * self.demo_slot

        # scene camera observes markers; a long-lens needle camera shares the
        # mount, swivelled so the needle presentation pose fills its view
        self.camera = camera if camera is not None else CameraModel()
        self.needle_camera = CameraModel(fx=4000.0, fy=4000.0,
                                         cx=self.camera.cx, cy=self.camera.cy,
                                         width=self.camera.width,
                                         height=self.camera.height,
                                         fps=self.camera.fps)
        self._inspect_view = Pose.identity()
        self.search_space = self.preset.search_space()
        if mandrel_sensing not in ("pose", "markers"):
            raise ValueError("mandrel_sensing must be 'pose' or 'markers'")
        self.mandrel_sensing = mandrel_sensing

        self.state: CellState | None = None
        self.belief: _Belief | None = None
        self.delivery_plan: list | None = None
        self._retreat: dict = {ROBOT_A: None, ROBOT_B: None}
        self._prev_tip = None
        self._prev_tail = None
        self._slot_inv_true = None
        self._arc = NeedleModel(radius_mm=self.needle_radius).dense_arc(24)

    # -- setup ---------------------------------------------------------------

    def _mandrel_backend(self):
        if self.preset.exact:
            return None
        if self.mandrel_sensing == "markers":
            return marker_backend(MarkerAssembly.mandrel(), self.camera,
                                  MANDREL_MARKER_MOUNT, self.preset)
        return pose_level_backend(self.preset)

    def initialize(self, initial_grip_params=None) -> CellState:
        """Place the cell at its run-start configuration and register slot 0.

        The mandrel is commanded so its slot 0 faces the sewing station; the
        true pose carries a placement offset under noisy presets, which the
        registration pass absorbs. The needle starts on driver A at the
        taught ready pose.
        """
        p = self.preset
        rng = self.rng
        nominal_mandrel = self.station_slot * self.design.slot(0).pose.inverse()
        placement = Pose.identity()
        if not p.exact:
            placement = Pose.from_rotvec(
                np.radians(rng.normal(0.0, 0.5, 3)), rng.normal(0.0, 2.0, 3))
        true_mandrel = nominal_mandrel * placement

        if initial_grip_params is not None:
            dx, rx, ry, rz = (float(v) for v in initial_grip_params)
            grip_a = perturbation_pose(dx, (rx, ry, rz)) * self.nominal_grip[ROBOT_A]
        elif p.exact:
            grip_a = self.nominal_grip[ROBOT_A]
        else:
            grip_a = (perturbation_pose(
                rng.normal(0.0, 0.4),
                rng.normal(0.0, 1.2, 3)) * self.nominal_grip[ROBOT_A])
        params_a, _ = decompose_grip(grip_a, self.nominal_grip[ROBOT_A])

        cx_n0 = self.station_slot * self.ready_slot
        cx_da = cx_n0 * grip_a.inverse()
        self._inspect_view = _aim_view(cx_n0.t)
        # B parks where the taught grasp approach begins
        b0_slot = self.demo_slot.inverse() * h_to_pose(self.refs[1].mu[0])
        cx_db = self.station_slot * b0_slot

        cam = FrameId.camera()
        da, db = FrameId.driver("A"), FrameId.driver("B")
        self.state = CellState(
            cx_m=FramedPose.varying(cam, FrameId.mandrel(), true_mandrel, 0.0),
            cx_da=FramedPose.varying(cam, da, cx_da, 0.0),
            cx_db=FramedPose.varying(cam, db, cx_db, 0.0),
            grip=FramedPose.varying(da, FrameId.needle(), grip_a, 0.0),
            grip_params=params_a,
        )
        self.belief = _Belief(
            mandrel=PoseSensor(nominal_mandrel, dt=1.0 / self.cfg.camera_hz,
                               measure=self._mandrel_backend(),
                               meas_sigma_mm=max(p.obs_sigma_mm, 1e-3),
                               meas_sigma_deg=max(p.obs_sigma_deg, 1e-3)),
            grips={ROBOT_A: grip_a if p.exact else self.nominal_grip[ROBOT_A],
                   ROBOT_B: self.nominal_grip[ROBOT_B]},
            params={ROBOT_A: params_a.copy(), ROBOT_B: np.zeros(4)},
        )

        for _ in range(self.cfg.registration_ticks):
            self.belief.mandrel.tick(self.state.cx_m.pose, rng)
            self.state.advance(1.0 / self.cfg.camera_hz)
        est = FramedPose.varying(cam, FrameId.mandrel(),
                                 self.belief.mandrel.estimate(),
                                 self.state.clock)
        self.state.cx_s0 = register_slot0(est, self.design.slot(0))
        self.state.registrations["s0"] = self.state.cx_s0
        self.delivery_plan = delivery_error_sequence(
            self.design, est, self.state.cx_s0)
        return self.state

    # -- sensing and frame mapping --------------------------------------------

    def _believed_slot(self, slot_index: int) -> Pose:
        return (self.belief.mandrel.estimate()
                * self.design.slot(slot_index).pose)

    def _believed_needle(self) -> Pose:
        st = self.state
        holder = st.holder_robot
        return st.driver(holder).pose * self.belief.grips[holder]

    def _target_for(self, k: int, sample_h: np.ndarray, slot_index: int) -> Pose:
        """Camera-frame driver target for primitive k's current sample."""
        ref_pose = h_to_pose(sample_h)
        if k in (1, 3):
            s_n = self.demo_slot.inverse() * ref_pose
            cx_n = self._believed_slot(slot_index) * s_n
            holder = ACTIVE_ROBOT[k]
            return cx_n * self.belief.grips[holder].inverse()
        if k == 5:
            cx_n = self.belief.anchor_n0 * ref_pose
            return cx_n * self.belief.grips[ROBOT_A].inverse()
        if k == 2:
            s_b = self.demo_slot.inverse() * ref_pose
            return self._believed_slot(slot_index) * s_b
        # k == 4: approach expressed relative to the live needle pose
        return self._believed_needle() * ref_pose

    # -- truth monitoring ------------------------------------------------------

    def _reset_monitor(self) -> None:
        self._prev_tip = None
        self._prev_tail = None

    def _monitor(self, trace: CycleTrace, k: int) -> None:
        st = self.state
        n_slot = self._slot_inv_true * st.cx_n.pose
        R = n_slot.rotation_matrix()
        t = n_slot.t
        tip = R[:, 0] * self.needle_radius + t
        tail = -R[:, 0] * self.needle_radius + t

        if self._prev_tip is not None:
            if k == 1 and trace.entry is None and self._prev_tip[2] > 0.0 >= tip[2]:
                lam = self._prev_tip[2] / (self._prev_tip[2] - tip[2])
                trace.entry = self._prev_tip[:2] + lam * (tip[:2] - self._prev_tip[:2])
                trace.log(st.clock, f"pierce-in at ({trace.entry[0]:+.2f}, "
                                    f"{trace.entry[1]:+.2f})")
            if k == 3 and self._prev_tail[2] < 0.0 <= tail[2]:
                lam = -self._prev_tail[2] / (tail[2] - self._prev_tail[2])
                trace.exit = (self._prev_tail[:2]
                              + lam * (tail[:2] - self._prev_tail[:2]))
                trace.log(st.clock, f"pierce-out at ({trace.exit[0]:+.2f}, "
                                    f"{trace.exit[1]:+.2f})")
        self._prev_tip = tip
        self._prev_tail = tail

        if t[2] < 25.0:  # clearance only matters near the fabric
            pts = (R @ self._arc.T).T + t
            c = wire_clearance_mm(pts, 0.5 * self.design.slot_width_mm,
                                  self.cfg.wire_offset_mm,
                                  self.cfg.wire_radius_mm)
            if c < trace.min_clearance_mm:
                trace.min_clearance_mm = c

    # -- motion ----------------------------------------------------------------

    def _camera_frame_step(self, robot: str, world_delta: np.ndarray) -> None:
        cur = self.state.driver(robot).pose
        self.state.move_driver(
            robot, Pose(t=cur.rotation_matrix().T @ np.asarray(world_delta)))

    def _retreat_step(self, active: str) -> None:
        for robot, target in list(self._retreat.items()):
            if target is None or robot == active:
                continue
            cur = self.state.driver(robot)
            fp = FramedPose.varying(cur.parent, cur.child, target,
                                    self.state.clock)
            cmd = servo_step(cur, fp, self.cfg.servo)
            if cmd.converged:
                self._retreat[robot] = None
                continue
            self.state.move_driver(robot, cmd.increment)

    def _apply_primitive_state(self, k: int, slot_index: int) -> None:
        jaw_a, jaw_b, _ = PRIMITIVE_TABLE[k - 1]
        st = self.state
        for robot, jaw, now in ((ROBOT_A, jaw_a, st.gripper_a),
                                (ROBOT_B, jaw_b, st.gripper_b)):
            if jaw == GRIPPER_OPEN and now == GRIPPER_CLOSED:
                # freed driver backs off along the slot normal
                away = self._believed_slot(slot_index).rotation_matrix()[:, 2]
                cur = st.driver(robot).pose
                self._retreat[robot] = Pose(t=cur.t + self.cfg.retreat_mm * away,
                                            q=cur.q)
            st.set_gripper(robot, jaw)
        self._retreat[ACTIVE_ROBOT[k]] = None
        st.primitive_index = k

    def _run_primitive(self, k: int, slot_index: int, trace: CycleTrace) -> None:
        cfg = self.cfg
        st = self.state
        ref = self.refs[k - 1]
        times = ref.times - ref.times[0]
        n = len(times)
        dt = 1.0 / cfg.camera_hz
        holder_active = ACTIVE_ROBOT[k] == st.holder_robot

        self._apply_primitive_state(k, slot_index)
        self._reset_monitor()
        if not holder_active:
            self._monitor(trace, k)  # needle is static: one clearance sample

        playback = 0.0
        stall = 0
        ticks = 0
        hard_cap = int(3.0 * (times[-1] / dt + cfg.approach_budget_ticks
                              + cfg.final_budget_ticks)) + 200
        active = ACTIVE_ROBOT[k]
        recorded_idx = -1

        while True:
            self.belief.mandrel.tick(st.cx_m.pose, self.rng)
            idx = min(n - 1, int(np.searchsorted(times, playback, side="right")) - 1)
            idx = max(idx, 0)
            target_pose = self._target_for(k, ref.mu[idx], slot_index)
            cur = st.driver(active)
            target = FramedPose.varying(cur.parent, cur.child, target_pose,
                                        st.clock)
            for _ in range(cfg.servo_substeps):
                cmd = servo_step(st.driver(active), target, cfg.servo)
                st.move_driver(active, cmd.increment)
                self._retreat_step(active)
                if holder_active:
                    self._monitor(trace, k)
            st.advance(dt)
            ticks += 1

            err = st.driver(active).pose.inverse() * target_pose
            last = idx == n - 1
            gate_mm = cfg.final_gate_mm if last else cfg.sample_gate_mm
            gate_deg = cfg.final_gate_deg if last else cfg.sample_gate_deg
            gated = (err.translation_norm() <= gate_mm
                     and err.rotation_angle_deg() <= gate_deg)
            at_end = last and playback >= times[-1]

            if gated:
                if holder_active and idx != recorded_idx:
                    trace.needle_samples.append(
                        (k, idx, self._slot_inv_true * st.cx_n.pose))
                    recorded_idx = idx
                if at_end:
                    break
                playback += dt
                stall = 0
            else:
                stall += 1
                trace.stalls += 1
                budget = (cfg.approach_budget_ticks if idx == 0
                          else cfg.final_budget_ticks if idx == n - 1
                          else cfg.stall_budget_ticks)
                if stall > budget:
                    trace.forced_advances += 1
                    if at_end:
                        trace.log(st.clock,
                                  f"primitive {k} ended unconverged")
                        break
                    playback += dt
                    stall = 0
            if ticks > hard_cap:
                trace.log(st.clock, f"primitive {k} hit its tick cap")
                break

    # -- grip transfer -----------------------------------------------------------

    def _handover(self, to_robot: str, trace: CycleTrace) -> bool:
        """Transfer the needle; returns False when the grasp fails."""
        p = self.preset
        st = self.state
        rng = self.rng
        nominal = self.nominal_grip[to_robot]
        x_new = st.driver(to_robot).pose
        true_new = x_new.inverse() * st.cx_n.pose

        if not p.exact:
            if p.loss_rate > 0.0 and rng.random() < p.loss_rate:
                trace.grip_lost = True
                trace.log(st.clock, f"grip lost handing to {to_robot}")
                return False
            wobble = perturbation_pose(
                rng.normal(0.0, p.handover_sigma_mm),
                rng.normal(0.0, p.handover_sigma_deg, 3))
            true_new = wobble * true_new
            if p.slip_rate > 0.0 and rng.random() < p.slip_rate:
                sgn = lambda: -1.0 if rng.random() < 0.5 else 1.0
                dx = sgn() * rng.uniform(*p.slip_mm)
                mag = rng.uniform(*p.slip_deg)
                slip = perturbation_pose(
                    dx, (0.3 * mag * sgn(), mag * sgn(), 0.6 * mag * sgn()))
                true_new = slip * true_new
                trace.log(st.clock, f"grip slipped {dx:+.2f} mm / {mag:.1f} deg "
                                    f"at hand-over to {to_robot}")

        params_true, resid = decompose_grip(true_new, nominal)
        scale = self.cfg.grasp_envelope_scale
        envelope = NeedleSearchSpace(
            x_mm=self.search_space.x_mm * scale,
            rx_deg=self.search_space.rx_deg * scale,
            ry_deg=self.search_space.ry_deg * scale,
            rz_deg=self.search_space.rz_deg * scale,
            step_x_mm=self.search_space.step_x_mm,
            step_rx_deg=self.search_space.step_rx_deg,
            step_ry_deg=self.search_space.step_ry_deg,
            step_rz_deg=self.search_space.step_rz_deg)
        if not envelope.contains(params_true) or resid > self.cfg.grasp_residual_mm:
            trace.grip_lost = True
            trace.log(st.clock, f"grasp missed the needle at {to_robot} "
                                f"(offset {params_true.round(2)})")
            return False

        holder = HOLDER_A if to_robot == ROBOT_A else HOLDER_B
        driver_frame = FrameId.driver("A" if to_robot == ROBOT_A else "B")
        st.hand_over(holder,
                     FramedPose.varying(driver_frame, FrameId.needle(),
                                        true_new, st.clock),
                     params_true)

        prev = ROBOT_B if to_robot == ROBOT_A else ROBOT_A
        believed_needle = st.driver(prev).pose * self.belief.grips[prev]
        bel_new = x_new.inverse() * believed_needle
        self.belief.grips[to_robot] = bel_new
        self.belief.params[to_robot] = decompose_grip(bel_new, nominal)[0]
        self._reset_monitor()  # the needle may jump: no fake plane crossings
        trace.log(st.clock, f"hand-over to {to_robot}")
        return True

    # -- detection ----------------------------------------------------------------

    def _detect_grip(self, trace: CycleTrace) -> bool:
        """Cycle-start needle pose estimation on driver A."""
        p = self.preset
        st = self.state
        nominal = self.nominal_grip[ROBOT_A]
        true_grip = st.grip.pose
        params_true, resid = decompose_grip(true_grip, nominal)

        if p.exact:
            self.belief.grips[ROBOT_A] = true_grip
            self.belief.params[ROBOT_A] = params_true.copy()
            trace.detection_params = params_true.copy()
            return True

        if not self.search_space.contains(params_true) or resid > 1.5:
            trace.detection_failed = True
            trace.log(st.clock, f"needle outside the detectable grip range "
                                f"(offset {params_true.round(2)})")
            return False

        model = NeedleModel(
            radius_mm=self.needle_radius,
            grip=FramedPose.varying(FrameId.driver("A"), FrameId.needle(),
                                    nominal, st.clock))
        view_inv = self._inspect_view.inverse()
        fmap = render_needle_features(
            self.needle_camera, view_inv * st.cx_n.pose,
            clutter=ClutterModel(level=p.clutter_level), rng=self.rng,
            model=model)
        try:
            detected, score = detect_needle(fmap, self.needle_camera,
                                            view_inv * st.cx_da.pose, model,
                                            self.search_space, stamp=st.clock)
        except NoCandidateVisible:
            trace.detection_failed = True
            trace.log(st.clock, "needle detection found no support")
            return False
        self.belief.grips[ROBOT_A] = detected.pose
        self.belief.params[ROBOT_A] = decompose_grip(detected.pose, nominal)[0]
        trace.detection_params = self.belief.params[ROBOT_A].copy()
        trace.log(st.clock, f"needle detected, grid offset "
                            f"{trace.detection_params.round(2)} (score {score:.1f})")
        return True

    # -- public operations -----------------------------------------------------------

    def deliver_slot(self, slot_index: int) -> None:
        """Rotate the mandrel until slot i sits at the registered station."""
        cfg = self.cfg
        st = self.state
        target = st.cx_s0.pose * self.design.slot(slot_index).pose.inverse()
        dt = 1.0 / cfg.camera_hz
        cam = FrameId.camera()
        m = FrameId.mandrel()
        for _ in range(cfg.delivery_budget_ticks):
            est = self.belief.mandrel.tick(st.cx_m.pose, self.rng)
            cur = FramedPose.varying(cam, m, est, st.clock)
            des = FramedPose.varying(cam, m, target, st.clock)
            cmd = servo_step(cur, des, cfg.servo)
            if (cmd.error.translation_norm() <= cfg.delivery_tol_mm
                    and cmd.error.rotation_angle_deg() <= cfg.delivery_tol_deg):
                break
            believed = est
            for _ in range(cfg.servo_substeps):
                step = servo_step(
                    FramedPose.varying(cam, m, believed, st.clock),
                    des, cfg.servo)
                st.move_mandrel(step.increment)
                self.belief.mandrel.advance_command(step.increment)
                believed = believed * step.increment
            st.advance(dt)
        st.slot_index = slot_index

    def tighten_stitch(self, trace: CycleTrace) -> float:
        """Pull the thread until the tension signal crosses the threshold."""
        cfg = self.cfg
        st = self.state
        p = self.preset
        away = self._believed_slot(st.slot_index).rotation_matrix()[:, 2]
        dt = 1.0 / cfg.camera_hz
        step = cfg.pull_speed_mm_s * dt
        pulled = 0.0
        moved = np.zeros(3)
        while True:
            # sense before moving: an already-taut thread stops the pull at 0
            tension = cfg.tension_ramp_per_mm * pulled
            if p.tension_sigma > 0.0:
                tension = max(0.0, tension + self.rng.normal(0.0, p.tension_sigma))
            st.tension = tension
            if tension >= cfg.tension_break:
                raise ThreadBreak(
                    f"tension {tension:.2f} exceeded the break limit "
                    f"{cfg.tension_break} at {pulled:.1f} mm")
            if tension >= cfg.tension_threshold or pulled >= cfg.max_pull_mm:
                break
            pulled += step
            delta = step * away
            self._camera_frame_step(ROBOT_A, delta)
            moved += delta
            st.advance(dt)
        # ease back so the needle rests at the ready pose again
        self._camera_frame_step(ROBOT_A, -moved)
        st.tension = 0.0
        trace.pull_mm = pulled
        trace.log(st.clock, f"stitch tightened after {pulled:.1f} mm pull")
        return pulled

    def run_stitch_cycle(self, slot_index: int | None = None,
                         trial_index: int = 0):
        """Execute one full cycle on the delivered slot.

        Returns (StitchRecord, CycleTrace). Failures are outcomes; the only
        exception raised is ThreadBreak for a misconfigured tension model.
        """
        cfg = self.cfg
        st = self.state
        p = self.preset
        slot = st.slot_index if slot_index is None else slot_index
        st.slot_index = slot
        trace = CycleTrace(slot_index=slot, design_id=self.design.id,
                           trial_index=trial_index)
        t0 = st.clock
        self._slot_inv_true = (st.cx_m.pose * self.design.slot(slot).pose).inverse()
        self._reset_monitor()

        if p.entangle_rate > 0.0 and self.rng.random() < p.entangle_rate:
            trace.entangled = True
            trace.log(st.clock, "thread entangled with the needle driver")

        self.belief.mandrel.tick(st.cx_m.pose, self.rng)
        ok = self._detect_grip(trace)
        st.advance(1.0 / cfg.camera_hz)
        self.belief.anchor_n0 = (st.driver(ROBOT_A).pose
                                 * self.belief.grips[ROBOT_A])

        if ok:
            for k in (1, 2, 3, 4, 5):
                self._run_primitive(k, slot, trace)
                if k in (2, 4):
                    to = ROBOT_B if k == 2 else ROBOT_A
                    if not self._handover(to, trace):
                        break
            else:
                trace.captured = stitch_captures_wire(
                    trace.entry, trace.exit, self.design.slot_width_mm,
                    0.5 * self.design.slot_width_mm)
                trace.touched = trace.min_clearance_mm < cfg.touch_clearance_mm
                if trace.captured:
                    trace.stitch_size_mm = surface_stitch_size_mm(
                        self.design, slot, trace.entry, trace.exit)
                self.tighten_stitch(trace)

        trace.duration_s = st.clock - t0
        if trace.failed:
            record = StitchRecord(slot_index=slot, outcome=OUTCOME_FAIL,
                                  cause=classify_failure(trace),
                                  stitch_size_mm=None,
                                  duration_s=trace.duration_s,
                                  design_id=self.design.id,
                                  trial_index=trial_index)
        else:
            record = StitchRecord(slot_index=slot, outcome=OUTCOME_SUCCESS,
                                  cause=None,
                                  stitch_size_mm=trace.stitch_size_mm,
                                  duration_s=trace.duration_s,
                                  design_id=self.design.id,
                                  trial_index=trial_index)
        return record, trace

    # -- trial sequencing ---------------------------------------------------------

    def _snapshot(self):
        return (self.state.snapshot(), dict(self.belief.grips),
                {k: v.copy() for k, v in self.belief.params.items()},
                dict(self._retreat))

    def _restore(self, snap) -> None:
        state, grips, params, retreat = snap
        clock = self.state.clock  # time moved on even though the cell did not
        self.state = state.snapshot()
        self.state.clock = clock
        self.belief.grips = dict(grips)
        self.belief.params = {k: v.copy() for k, v in params.items()}
        self._retreat = dict(retreat)

    def _reseat_needle(self) -> None:
        """Operator puts the needle back in driver A after a failed cycle."""
        p = self.preset
        nominal = self.nominal_grip[ROBOT_A]
        if p.exact:
            grip = nominal
        else:
            grip = (perturbation_pose(
                self.rng.normal(0.0, 0.4),
                self.rng.normal(0.0, 1.2, 3)) * nominal)
        params, _ = decompose_grip(grip, nominal)
        st = self.state
        cx_n = st.cx_da.pose * grip  # needle seated where the driver waits
        if st.holder_robot != ROBOT_A:
            st.set_gripper(ROBOT_A, GRIPPER_CLOSED)
            st.hand_over(HOLDER_A,
                         FramedPose.varying(FrameId.driver("A"),
                                            FrameId.needle(), grip, st.clock),
                         params)
            st.set_gripper(ROBOT_B, GRIPPER_OPEN)
        else:
            st.set_grip(FramedPose.varying(FrameId.driver("A"),
                                           FrameId.needle(), grip, st.clock),
                        params)
        self.belief.grips[ROBOT_A] = nominal
        self.belief.params[ROBOT_A] = np.zeros(4)


def run_trials(design: MandrelDesign, models: list[PrimitiveModel],
               n_stitches: int, preset: NoisePreset | str = "none",
               seed: int = 0, config: LoopConfig | None = None,
               references: list[ReferenceTrajectory] | None = None,
               mandrel_sensing: str = "pose", collect_traces: bool = False):
    """Sew ``n_stitches`` slots in round-robin order on one design.

    Each failed cycle restores the cell to the cycle-start state and re-seats
    the needle before moving on; identical inputs and seed reproduce the
    record stream bit for bit.
    """
    cell = SewingCell(design, models, preset=preset, config=config,
                      references=references, seed=seed,
                      mandrel_sensing=mandrel_sensing)
    cell.initialize()
    records = []
    traces = []
    for t in range(n_stitches):
        slot = t % design.n_slots
        cell.deliver_slot(slot)
        snap = cell._snapshot()
        record, trace = cell.run_stitch_cycle(slot, trial_index=t + 1)
        if record.outcome == OUTCOME_FAIL:
            cell._restore(snap)
            cell._reseat_needle()
        records.append(record)
        if collect_traces:
            traces.append(trace)
    return (records, traces) if collect_traces else records
