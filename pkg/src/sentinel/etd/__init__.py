"""Anomaly detection over authentication behavior.

Feature extraction from auth records, a Gaussian baseline scored by
Mahalanobis distance, an isolation forest, threshold calibration, and
streaming detection against a versioned model artifact.
"""

from .features import FeatureRow, MANDATORY_FEATURES, StreamingFeatureExtractor, extract_features
from .geo import GeoTable, haversine_km
from .gaussian import (
    GaussianModel,
    NormalizationStats,
    TrainingError,
    calibrate_tau,
    fit_gaussian,
    mahalanobis_score,
)
from .iforest import IsolationForestModel, avg_path_length, build_iforest, iforest_score
from .detector import ModelArtifact, ScoringError, detect_stream, score_event, train_model

__all__ = [
    "FeatureRow", "MANDATORY_FEATURES", "StreamingFeatureExtractor", "extract_features",
    "GeoTable", "haversine_km",
    "GaussianModel", "NormalizationStats", "TrainingError",
    "calibrate_tau", "fit_gaussian", "mahalanobis_score",
    "IsolationForestModel", "avg_path_length", "build_iforest", "iforest_score",
    "ModelArtifact", "ScoringError", "detect_stream", "score_event", "train_model",
]
