"""Demonstration recordings and their segmentation into motion primitives.

A demonstration is one full stitch cycle: three pose streams (tool A,
tool B, needle) on a common clock plus stepwise gripper and needle-holder
signals.  The (gripper_a, gripper_b, holder) triple walks through five
states; run-length encoding that walk yields the five motion primitives.

Per-primitive reference frames:
  1-3 mandrel, 4 current needle, 5 needle pose at cycle start.
The stream that carries the skill differs per primitive: the needle path
while a driver holds the needle (1, 3, 5), the free driver's approach to
its grasp pose otherwise (2: tool B, 4: tool A).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from ..errors import MalformedDemonstration
from ..geometry import FrameId, Pose
from ..geometry.pose import framed_pose_from_dict, framed_pose_to_dict, FramedPose

GRIPPER_OPEN = "Open"
GRIPPER_CLOSED = "Closed"
HOLDER_A = "WithA"
HOLDER_B = "WithB"

# (gripper_a, gripper_b, holder) per primitive, in execution order
PRIMITIVE_TABLE = (
    (GRIPPER_CLOSED, GRIPPER_OPEN, HOLDER_A),
    (GRIPPER_CLOSED, GRIPPER_CLOSED, HOLDER_A),
    (GRIPPER_OPEN, GRIPPER_CLOSED, HOLDER_B),
    (GRIPPER_CLOSED, GRIPPER_CLOSED, HOLDER_B),
    (GRIPPER_CLOSED, GRIPPER_OPEN, HOLDER_A),
)

# frame tag of the learned stream per primitive (1-based index)
PRIMITIVE_FRAMES = {1: "m", 2: "m", 3: "m", 4: "n", 5: "n0"}

# which stream carries the skill per primitive
PRIMITIVE_STREAMS = {1: "needle", 2: "tool_b", 3: "needle", 4: "tool_a", 5: "needle"}


def pose_to_h(pose: Pose) -> np.ndarray:
    """6-vector (x, y, z in meters; alpha, beta, theta in degrees)."""
    alpha, beta, theta = pose.euler_deg()
    t = pose.t / 1000.0
    return np.array([t[0], t[1], t[2], alpha, beta, theta])


def h_to_pose(h: np.ndarray) -> Pose:
    return Pose.from_euler_deg(np.asarray(h[:3], dtype=float) * 1000.0, h[3:6])


def unwrap_angles_deg(a: np.ndarray) -> np.ndarray:
    """Remove 360-degree jumps along axis 0 so streams are continuous."""
    return np.degrees(np.unwrap(np.radians(np.asarray(a, dtype=float)), axis=0))


@dataclass
class TrajectorySample:
    t: float
    h: np.ndarray  # (6,) x,y,z in m; alpha,beta,theta in deg
    frame: FrameId

    def __post_init__(self):
        self.h = np.asarray(self.h, dtype=float).reshape(6)


@dataclass
class Demonstration:
    """Three camera-frame pose streams plus gripper/holder signals.

    Header fields pin the recording context: the mandrel pose during the
    demo, the demonstrated slot's mandrel-frame transform, and the needle
    pose at cycle start (all camera or mandrel frame, constant).
    """

    times: np.ndarray                 # (N,) strictly increasing, seconds
    tool_a: list[Pose]                # camera-frame pose per sample
    tool_b: list[Pose]
    needle: list[Pose]
    gripper_a: list[str]
    gripper_b: list[str]
    holder: list[str]
    camera_mandrel: Pose              # constant during one demo
    demo_slot: Pose                   # slot-in-mandrel transform of the taught slot
    demo_slot_index: int = 0
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float).reshape(-1)
        self.validate()

    @property
    def n_samples(self) -> int:
        return len(self.times)

    def needle_initial(self) -> Pose:
        """Camera-frame needle pose at the first sample."""
        return self.needle[0]

    def validate(self) -> None:
        n = len(self.times)
        if n < 2:
            raise MalformedDemonstration("need at least 2 samples")
        if np.any(np.diff(self.times) <= 0):
            raise MalformedDemonstration("timestamps must be strictly increasing")
        for name in ("tool_a", "tool_b", "needle", "gripper_a", "gripper_b", "holder"):
            if len(getattr(self, name)) != n:
                raise MalformedDemonstration(f"stream {name} length differs from clock")
        for g in self.gripper_a + self.gripper_b:
            if g not in (GRIPPER_OPEN, GRIPPER_CLOSED):
                raise MalformedDemonstration(f"bad gripper value {g!r}")
        for hld in self.holder:
            if hld not in (HOLDER_A, HOLDER_B):
                raise MalformedDemonstration(f"bad holder value {hld!r}")
        for k in range(1, n):
            if self.holder[k] != self.holder[k - 1]:
                if not (
                    self.gripper_a[k - 1] == GRIPPER_CLOSED
                    and self.gripper_b[k - 1] == GRIPPER_CLOSED
                ):
                    raise MalformedDemonstration(
                        f"holder change at sample {k} without a closed/closed hand-over"
                    )

    def state_runs(self) -> list[tuple[tuple[str, str, str], int, int]]:
        """Run-length encoding of the (gripper_a, gripper_b, holder) triple.

        Returns (state, start, stop) with stop exclusive.
        """
        runs = []
        start = 0
        cur = (self.gripper_a[0], self.gripper_b[0], self.holder[0])
        for k in range(1, self.n_samples):
            s = (self.gripper_a[k], self.gripper_b[k], self.holder[k])
            if s != cur:
                runs.append((cur, start, k))
                cur, start = s, k
        runs.append((cur, start, self.n_samples))
        return runs


@dataclass
class PrimitiveSegment:
    index: int                        # 1..5
    start: int                        # sample range in the parent demonstration
    stop: int                         # exclusive
    frame: FrameId
    steps: list[TrajectorySample]     # learned stream, expressed in `frame`

    @property
    def times(self) -> np.ndarray:
        return np.array([s.t for s in self.steps])

    @property
    def h_array(self) -> np.ndarray:
        return np.array([s.h for s in self.steps])


def _project_stream(
    demo: Demonstration, start: int, stop: int, index: int
) -> list[TrajectorySample]:
    """Express the primitive's skill stream in its reference frame.

    Times are re-zeroed to the segment start so every primitive is encoded
    on its own clock.
    """
    frame = FrameId.from_tag(PRIMITIVE_FRAMES[index])
    stream_name = PRIMITIVE_STREAMS[index]
    stream = getattr(demo, stream_name)

    if PRIMITIVE_FRAMES[index] == "m":
        ref_inv = demo.camera_mandrel.inverse()
        local = [ref_inv * stream[k] for k in range(start, stop)]
    elif PRIMITIVE_FRAMES[index] == "n":
        local = [demo.needle[k].inverse() * stream[k] for k in range(start, stop)]
    else:  # needle pose at cycle start
        ref_inv = demo.needle_initial().inverse()
        local = [ref_inv * stream[k] for k in range(start, stop)]

    t0 = demo.times[start]
    hs = np.array([pose_to_h(p) for p in local])
    hs[:, 3:] = unwrap_angles_deg(hs[:, 3:])
    return [
        TrajectorySample(t=float(demo.times[start + j] - t0), h=hs[j], frame=frame)
        for j in range(stop - start)
    ]


def segment(demo: Demonstration) -> list[PrimitiveSegment]:
    """Split a demonstration into the five motion primitives.

    The gripper/holder state sequence must walk the primitive table
    exactly once, in order; anything else raises MalformedDemonstration.
    """
    runs = demo.state_runs()
    if len(runs) != len(PRIMITIVE_TABLE):
        raise MalformedDemonstration(
            f"expected {len(PRIMITIVE_TABLE)} primitive states, found {len(runs)}"
        )
    segments = []
    for i, (state, start, stop) in enumerate(runs):
        if state != PRIMITIVE_TABLE[i]:
            raise MalformedDemonstration(
                f"state {state} at run {i + 1} does not match primitive "
                f"{i + 1} {PRIMITIVE_TABLE[i]}"
            )
        index = i + 1
        segments.append(
            PrimitiveSegment(
                index=index,
                start=start,
                stop=stop,
                frame=FrameId.from_tag(PRIMITIVE_FRAMES[index]),
                steps=_project_stream(demo, start, stop, index),
            )
        )
    return segments


# ---------------------------------------------------------------------------
# file format

def _pose_record(pose: Pose, t: float | None, parent: str, child: str) -> dict:
    fp = (
        FramedPose.varying(FrameId.from_tag(parent), FrameId.from_tag(child), pose, t)
        if t is not None
        else FramedPose.constant(FrameId.from_tag(parent), FrameId.from_tag(child), pose)
    )
    return framed_pose_to_dict(fp)


def save_demonstration(demo: Demonstration, path) -> None:
    doc = {
        "units": {"translation": "mm", "rotation": "deg", "time": "s"},
        "camera_mandrel": _pose_record(demo.camera_mandrel, None, "c", "m"),
        "demo_slot": _pose_record(
            demo.demo_slot, None, "m", f"s{demo.demo_slot_index}"
        ),
        "demo_slot_index": demo.demo_slot_index,
        "meta": demo.meta,
        "samples": [
            {
                "t": float(demo.times[k]),
                "tool_a": _pose_record(demo.tool_a[k], float(demo.times[k]), "c", "eeA"),
                "tool_b": _pose_record(demo.tool_b[k], float(demo.times[k]), "c", "eeB"),
                "needle": _pose_record(demo.needle[k], float(demo.times[k]), "c", "n"),
                "gripper_a": demo.gripper_a[k],
                "gripper_b": demo.gripper_b[k],
                "holder": demo.holder[k],
            }
            for k in range(demo.n_samples)
        ],
    }
    with open(path, "w") as f:
        json.dump(doc, f)


def load_demonstration(path) -> Demonstration:
    with open(path) as f:
        doc = json.load(f)
    samples = doc["samples"]
    return Demonstration(
        times=np.array([s["t"] for s in samples]),
        tool_a=[framed_pose_from_dict(s["tool_a"]).pose for s in samples],
        tool_b=[framed_pose_from_dict(s["tool_b"]).pose for s in samples],
        needle=[framed_pose_from_dict(s["needle"]).pose for s in samples],
        gripper_a=[s["gripper_a"] for s in samples],
        gripper_b=[s["gripper_b"] for s in samples],
        holder=[s["holder"] for s in samples],
        camera_mandrel=framed_pose_from_dict(doc["camera_mandrel"]).pose,
        demo_slot=framed_pose_from_dict(doc["demo_slot"]).pose,
        demo_slot_index=int(doc.get("demo_slot_index", 0)),
        meta=doc.get("meta", {}),
    )
