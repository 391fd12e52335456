"""Learning from demonstration: segmentation, alignment, encoding, retrieval.

Pipeline: recorded demonstrations are segmented into the five stitch-cycle
primitives, time-aligned per primitive with dynamic time warping, encoded
as Gaussian mixtures over (t, h), and retrieved as reference trajectories
with a context-dependent speed schedule.

Units inside this package: h = (x, y, z, alpha, beta, theta) with
translation in meters and rotation in degrees; time in seconds.  Pose
records at file boundaries use millimetres (shared pose schema).
"""

from .demonstration import (
    GRIPPER_CLOSED,
    GRIPPER_OPEN,
    HOLDER_A,
    HOLDER_B,
    PRIMITIVE_TABLE,
    Demonstration,
    PrimitiveSegment,
    TrajectorySample,
    h_to_pose,
    load_demonstration,
    pose_to_h,
    save_demonstration,
    segment,
)
from .dtw import dtw_align, dtw_cost_and_path, h_distance
from .gmm import GmmModel, fit_gmm, select_k
from .gmr import gmr
from .context import ContextProfile, context_profile, speed_ratio
from .reference import (
    PrimitiveModel,
    ReferenceTrajectory,
    build_reference,
    load_model,
    load_reference,
    save_model,
    save_reference,
)
from .synthetic import (
    DemoProfile,
    camera_mandrel_pose,
    generate_demonstrations,
    grip_from_contact,
    needle_slot_pose,
    perturb_grip,
    phase_windows,
    slot_in_mandrel,
)

__all__ = [
    "GRIPPER_CLOSED",
    "GRIPPER_OPEN",
    "HOLDER_A",
    "HOLDER_B",
    "PRIMITIVE_TABLE",
    "Demonstration",
    "PrimitiveSegment",
    "TrajectorySample",
    "h_to_pose",
    "pose_to_h",
    "segment",
    "load_demonstration",
    "save_demonstration",
    "dtw_align",
    "dtw_cost_and_path",
    "h_distance",
    "GmmModel",
    "fit_gmm",
    "select_k",
    "gmr",
    "ContextProfile",
    "context_profile",
    "speed_ratio",
    "PrimitiveModel",
    "ReferenceTrajectory",
    "build_reference",
    "save_model",
    "load_model",
    "save_reference",
    "load_reference",
    "DemoProfile",
    "generate_demonstrations",
    "grip_from_contact",
    "perturb_grip",
    "needle_slot_pose",
    "slot_in_mandrel",
    "camera_mandrel_pose",
    "phase_windows",
]
