from .pose import (
    Pose,
    FrameId,
    FramedPose,
    Frame,
    compose,
    invert,
    pose_error,
    perturbation_pose,
    euler_zyx_deg_to_matrix,
    matrix_to_euler_zyx_deg,
)
from .graph import FrameGraph
from .registration import register_absolute_orientation

__all__ = [
    "Pose",
    "FrameId",
    "FramedPose",
    "Frame",
    "compose",
    "invert",
    "pose_error",
    "perturbation_pose",
    "euler_zyx_deg_to_matrix",
    "matrix_to_euler_zyx_deg",
    "FrameGraph",
    "register_absolute_orientation",
]
