"""Calibrated per-pixel prediction intervals for image-to-image regression.

Heuristic bounds (sampled-variation quantiles or a quantile regressor) are
turned into risk-controlling prediction sets with a Hoeffding-bound scan.
"""

from .calibration import (
    CalibrationResult,
    LambdaGrid,
    apply_calibration,
    calibrate,
    hoeffding_ucb,
    interval_risk,
    scale_interval,
)
from .core import BoundPair, RiskConfig, enforce_bound_order, validate_image
from .metrics import MetricsReport, evaluate, size_stratified_risk
from .sample_bounds import bounds_from_samples, empirical_quantile

__version__ = "0.1.0"
