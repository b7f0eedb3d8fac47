"""Distribution-free CUSUM monitoring for low-rank matrix/image time series."""

from .calibration import CalibrationParams, calibrate, load_calibration, save_calibration
from .cusum import AlarmEvent, MonitorConfig, MonitorState, run, run_with_restart, step
from .features import FeatureVector, InControlModel, ProjectionBasis, feature_vector
from .harness import ArlEstimate, GridCell, GridReport, estimate_arl, run_grid
from .simulate import CovSpec, NoiseSpec, ScenarioConfig, TemporalSpec, generate_sequence

__version__ = "0.1.0"

__all__ = [
    "AlarmEvent",
    "ArlEstimate",
    "CalibrationParams",
    "CovSpec",
    "FeatureVector",
    "GridCell",
    "GridReport",
    "InControlModel",
    "MonitorConfig",
    "MonitorState",
    "NoiseSpec",
    "ProjectionBasis",
    "ScenarioConfig",
    "TemporalSpec",
    "calibrate",
    "estimate_arl",
    "feature_vector",
    "generate_sequence",
    "load_calibration",
    "run",
    "run_grid",
    "run_with_restart",
    "save_calibration",
    "step",
]
