"""Simulated three-robot sewing cell: state, servoing, noise, execution."""

from .mandrel import (
    MandrelDesign,
    MandrelProfile,
    load_design,
    make_design,
    save_design,
    shipped_designs,
    slot_frame,
)
from .metrics import (
    DesignStats,
    MetricsReport,
    compute_metrics,
    format_summary,
    format_trial_table,
)
from .noise import (
    PRESETS,
    NoisePreset,
    PoseSensor,
    SensorConfig,
    preset,
)
from .servo import (
    ServoCommand,
    ServoConfig,
    delivery_error_sequence,
    mandrel_delivery_error,
    needle_to_driver_target,
    register_slot0,
    servo_step,
    transplant,
)
from .state import CellState, HandOverViolation, ROBOT_A, ROBOT_B
from .stitch import (
    ACTIVE_ROBOT,
    CAUSE_ENTANGLING,
    CAUSE_HANDLING,
    CAUSE_MISSING,
    CAUSE_TOUCHING,
    CAUSE_UNCLASSIFIED,
    FAILURE_CAUSES,
    OUTCOME_FAIL,
    OUTCOME_SUCCESS,
    CycleTrace,
    LoopConfig,
    SewingCell,
    StitchRecord,
    classify_failure,
    reference_stitch_size_mm,
    run_trials,
    stitch_captures_wire,
    surface_stitch_size_mm,
    wire_clearance_mm,
)

__all__ = [
    "ACTIVE_ROBOT",
    "CAUSE_ENTANGLING",
    "CAUSE_HANDLING",
    "CAUSE_MISSING",
    "CAUSE_TOUCHING",
    "CAUSE_UNCLASSIFIED",
    "CellState",
    "CycleTrace",
    "DesignStats",
    "FAILURE_CAUSES",
    "HandOverViolation",
    "LoopConfig",
    "MandrelDesign",
    "MandrelProfile",
    "MetricsReport",
    "NoisePreset",
    "OUTCOME_FAIL",
    "OUTCOME_SUCCESS",
    "PRESETS",
    "PoseSensor",
    "ROBOT_A",
    "ROBOT_B",
    "SensorConfig",
    "ServoCommand",
    "ServoConfig",
    "SewingCell",
    "StitchRecord",
    "classify_failure",
    "compute_metrics",
    "delivery_error_sequence",
    "format_summary",
    "format_trial_table",
    "load_design",
    "make_design",
    "mandrel_delivery_error",
    "needle_to_driver_target",
    "preset",
    "reference_stitch_size_mm",
    "register_slot0",
    "run_trials",
    "save_design",
    "servo_step",
    "shipped_designs",
    "slot_frame",
    "stitch_captures_wire",
    "surface_stitch_size_mm",
    "transplant",
    "wire_clearance_mm",
]
