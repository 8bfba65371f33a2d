"""Count-min sketching with calibrated confidence intervals for stream
frequency queries."""

from .conformal import (AdaptiveErrorModel, CalibrationQuantile, ConfidenceInterval,
                        calibrate_conditional, calibrate_marginal, calibrate_pairs,
                        calibrate_unique, fit_adaptive, make_partition, predict_lower,
                        predict_two_sided, score_adaptive, score_fixed,
                        two_sided_bonferroni)
from .errors import CalibrationError, CapacityError, ConfigurationError
from .generators import PitmanYorSampler, ShiftMixture, ZipfSampler
from .hashing import HashFamily, fingerprint
from .pipeline import (PipelineResult, SupervisedPair, TrackedCounts, WarmupCounts,
                       build_supervised, run_pipeline, split_train_calib)
from .sketch import CountMinSketch

__version__ = "0.1.0"

__all__ = [
    "AdaptiveErrorModel", "CalibrationError", "CalibrationQuantile",
    "CapacityError", "ConfidenceInterval", "ConfigurationError",
    "CountMinSketch", "HashFamily", "PipelineResult", "PitmanYorSampler",
    "ShiftMixture", "SupervisedPair", "TrackedCounts", "WarmupCounts",
    "ZipfSampler", "build_supervised", "calibrate_conditional",
    "calibrate_marginal", "calibrate_pairs", "calibrate_unique", "fingerprint",
    "fit_adaptive", "make_partition", "predict_lower", "predict_two_sided",
    "run_pipeline", "score_adaptive", "score_fixed", "split_train_calib",
    "two_sided_bonferroni",
]
