"""Shilling attack simulation and correlation-based detection for CF recommenders."""

__version__ = "0.1.0"

from .attacks import AttackConfig, ShillingProfile, describe_attack, generate_attack
from .detection import DetectionConfig, DetectionReport, detect_shilling
from .errors import (CapabilityError, ColdStartError, DatasetParseError, ShillkitError,
                     UnknownIdError, ValidationError)
from .evaluation import (DetectionScore, ExperimentResult, GroundTruth, ImpactScore,
                         measure_impact, rmse_shift, run_grid, score_detection)
from .ratings import (DatasetStats, RatingMatrix, co_rated_items, compute_stats,
                      inject_profiles, load_movielens, write_ratings)
from .recommenders import FactorModel, PredictionModel, svd_factorize

__all__ = [
    "AttackConfig", "CapabilityError", "ColdStartError", "DatasetParseError", "DatasetStats",
    "DetectionConfig", "DetectionReport", "DetectionScore", "ExperimentResult", "FactorModel",
    "GroundTruth", "ImpactScore", "PredictionModel", "RatingMatrix", "ShillingProfile",
    "ShillkitError", "UnknownIdError", "ValidationError", "co_rated_items", "compute_stats",
    "describe_attack", "detect_shilling", "generate_attack", "inject_profiles",
    "load_movielens", "measure_impact", "rmse_shift", "run_grid", "score_detection",
    "svd_factorize", "write_ratings",
]
