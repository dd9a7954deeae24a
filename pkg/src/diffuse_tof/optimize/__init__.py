"""Scene recovery: multi-start initialization, Adam refinement and sensor calibration."""

from .adam import Adam
from .calibrate import CalibConfig, CalibResult, calibrate_sensor, calibrated_spec, capture_distances
from .initialize import InitConfig, InitResult, fit_albedos, initialize, sample_candidates, score_candidates
from .loss import LOSS_NORMS, histogram_loss
from .pipeline import Estimate, estimate_scene
from .refine import RefineConfig, RefineResult, canonical, evaluate_loss, refine

__all__ = [
    "Adam", "CalibConfig", "CalibResult", "Estimate", "InitConfig", "InitResult", "LOSS_NORMS",
    "RefineConfig", "RefineResult", "calibrate_sensor", "calibrated_spec", "canonical", "capture_distances",
    "estimate_scene", "evaluate_loss", "fit_albedos", "histogram_loss", "initialize", "refine",
    "sample_candidates", "score_candidates",
]
