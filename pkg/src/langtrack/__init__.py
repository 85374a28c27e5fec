"""Language-guided multi-object tracking toolkit.

Tracking-by-detection over text-grounded detections (SORT, two-threshold
byte association, and observation-centric tracking with re-update and
momentum), the full HOTA / CLEAR / identity evaluation battery over
(sequence, expression) units, MOT-format data tooling, and a seeded
synthetic scenario generator for oracle-verified benchmarking.
"""

__version__ = "0.1.0"

from .geometry import BBox, StateBox, from_state, iou, to_state
from .motion import KalmanState, MotionModel, kf_init, kf_predict, kf_update, oru_reupdate
from .association import Assignment, CostMatrix, iou_cost, ocm_cost, solve_assignment
from .tracker import Detection, MultiObjectTracker, Track, TrackerConfig, TrackStatus, run
from .metrics import (
    EvalUnit,
    MetricReport,
    aggregate,
    compute_clear,
    compute_hota,
    compute_identity,
    evaluate_unit,
)
from .simulate import SimConfig, generate

__all__ = [
    "__version__",
    "BBox",
    "StateBox",
    "iou",
    "to_state",
    "from_state",
    "KalmanState",
    "MotionModel",
    "kf_init",
    "kf_predict",
    "kf_update",
    "oru_reupdate",
    "Assignment",
    "CostMatrix",
    "iou_cost",
    "ocm_cost",
    "solve_assignment",
    "Detection",
    "Track",
    "TrackStatus",
    "TrackerConfig",
    "MultiObjectTracker",
    "run",
    "EvalUnit",
    "MetricReport",
    "aggregate",
    "compute_hota",
    "compute_clear",
    "compute_identity",
    "evaluate_unit",
    "SimConfig",
    "generate",
]
