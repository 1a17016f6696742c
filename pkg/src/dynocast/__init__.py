"""Dynamically feasible vehicle trajectory forecasting with conformal regions.

The package couples a learned intent decoder with a surrogate bicycle model
so every predicted trajectory is reachable under bounded controls, and
quantifies prediction uncertainty with conformalized quantile regression in
driving-tailored (rotated-rectangle and track-relative) coordinates.
"""

__version__ = "0.1.0"

from .conformal import (
    CalibratedRegion,
    coverage_report,
    cqr_calibrate,
    region_polygons,
    score_batch,
    score_frenet,
    score_rotated_rect,
)
from .dynamics import (
    BicycleParams,
    ControlBounds,
    ControlInput,
    CtrvParams,
    FeasibilityReport,
    IntegratorConfig,
    VehicleState,
    bicycle_deriv,
    ctrv_deriv,
    is_feasible,
    rollout,
    step,
)
from .estimators import (
    CtrvPredictor,
    LstmPredictor,
    PhysicsPredictor,
    PredictedTrajectory,
    describe_intent,
    load_predictor,
    save_predictor,
)
from .frames import LocalFrame, from_local, to_local
from .metrics import MetricReport, OrientedBox, ade, evaluate_trajectories, fde, oriented_iou
from .simkit import GenerationConfig, RaceLine, SplitSpec, Trace, generate_dataset, simulate
from .track import Track, build_track

__all__ = [
    "BicycleParams",
    "CalibratedRegion",
    "ControlBounds",
    "ControlInput",
    "CtrvParams",
    "CtrvPredictor",
    "FeasibilityReport",
    "GenerationConfig",
    "IntegratorConfig",
    "LocalFrame",
    "LstmPredictor",
    "MetricReport",
    "OrientedBox",
    "PhysicsPredictor",
    "PredictedTrajectory",
    "RaceLine",
    "SplitSpec",
    "Trace",
    "Track",
    "VehicleState",
    "ade",
    "bicycle_deriv",
    "build_track",
    "coverage_report",
    "cqr_calibrate",
    "ctrv_deriv",
    "describe_intent",
    "evaluate_trajectories",
    "fde",
    "from_local",
    "generate_dataset",
    "is_feasible",
    "load_predictor",
    "oriented_iou",
    "region_polygons",
    "rollout",
    "save_predictor",
    "score_batch",
    "score_frenet",
    "score_rotated_rect",
    "simulate",
    "step",
    "to_local",
]
