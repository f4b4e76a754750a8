"""The versioned anomaly model artifact and streaming detection.

An artifact bundles normalization stats, the Gaussian baseline, the
isolation forest and the calibrated threshold tau.  A row is anomalous
when the Mahalanobis score exceeds tau or the forest score exceeds its
own threshold; mahalanobis wins ties when naming the trigger.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from typing import Iterable, Iterator, List, Optional, Sequence, Tuple

import numpy as np

from ..events import EmergentThreat, IpAddress, Timestamp, numeric_to_ip
from .features import FeatureRow, MANDATORY_FEATURES
from .gaussian import (
    GaussianModel,
    NormalizationStats,
    TrainingError,
    fit_gaussian,
    mahalanobis_score,
)
from .iforest import IsolationForestModel, build_iforest, iforest_score

DEFAULT_IFOREST_THRESHOLD = 0.7


class ScoringError(ValueError):
    pass


@dataclass
class ScoreResult:
    mahalanobis: float
    iforest: float
    is_anomalous: bool
    detector: Optional[str]  # "mahalanobis" | "isolation_forest" | None

    @property
    def anomaly_score(self) -> float:
        return self.mahalanobis if self.detector != "isolation_forest" else self.iforest


@dataclass
class ModelArtifact:
    version: str
    trained_at: Timestamp
    feature_names: List[str]
    stats: NormalizationStats
    gaussian: GaussianModel
    iforest: IsolationForestModel
    training_window_days: int
    iforest_threshold: float = DEFAULT_IFOREST_THRESHOLD

    def to_payload(self) -> dict:
        return {
            "version": self.version,
            "trained_at": self.trained_at.isoformat(),
            "feature_names": list(self.feature_names),
            "training_window_days": self.training_window_days,
            "iforest_threshold": self.iforest_threshold,
            "stats": {
                "feature_names": list(self.stats.feature_names),
                "mean": self.stats.mean.tolist(),
                "std": self.stats.std.tolist(),
                "dropped": list(self.stats.dropped),
            },
            "gaussian": {
                "cov": self.gaussian.cov.reshape(-1).tolist(),  # row-major
                "cov_inv": self.gaussian.cov_inv.reshape(-1).tolist(),
                "regularization": self.gaussian.regularization,
                "tau": self.gaussian.tau,
                "dim": self.gaussian.dim,
            },
            "iforest": self.iforest.to_obj(),
        }

    @classmethod
    def from_payload(cls, obj: dict) -> "ModelArtifact":
        stats = NormalizationStats(
            feature_names=list(obj["stats"]["feature_names"]),
            mean=np.array(obj["stats"]["mean"], dtype=float),
            std=np.array(obj["stats"]["std"], dtype=float),
            dropped=list(obj["stats"]["dropped"]),
        )
        g = obj["gaussian"]
        d = int(g["dim"])
        gaussian = GaussianModel(
            mean=np.zeros(d),
            cov=np.array(g["cov"], dtype=float).reshape(d, d),
            cov_inv=np.array(g["cov_inv"], dtype=float).reshape(d, d),
            regularization=float(g["regularization"]),
            tau=float(g["tau"]),
            dim=d,
        )
        return cls(
            version=obj["version"],
            trained_at=Timestamp.parse(obj["trained_at"]),
            feature_names=list(obj["feature_names"]),
            stats=stats,
            gaussian=gaussian,
            iforest=IsolationForestModel.from_obj(obj["iforest"]),
            training_window_days=int(obj["training_window_days"]),
            iforest_threshold=float(obj.get("iforest_threshold", DEFAULT_IFOREST_THRESHOLD)),
        )


def content_hash(payload: dict) -> str:
    body = {k: v for k, v in payload.items() if k != "version"}
    blob = json.dumps(body, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def train_model(
    rows: Sequence[FeatureRow],
    q: float = 0.99,
    tree_count: int = 100,
    subsample: int = 256,
    seed: int = 0,
    training_window_days: int = 30,
    trained_at: Optional[Timestamp] = None,
    iforest_threshold: float = DEFAULT_IFOREST_THRESHOLD,
) -> ModelArtifact:
    """Fit normalization, Gaussian baseline (with tau) and isolation forest."""
    if not rows:
        raise TrainingError("no training rows")
    names = rows[0].feature_names()
    try:
        X = np.array([row.to_vector(names) for row in rows], dtype=float)
    except KeyError as exc:
        raise TrainingError(f"inconsistent optional columns, missing {exc}") from exc
    stats, gaussian = fit_gaussian(X, names, q=q)
    keep = [names.index(n) for n in stats.feature_names]
    Z = stats.normalize(X[:, keep])
    forest = build_iforest(Z, tree_count=tree_count, subsample=subsample, seed=seed)

    trained_at = trained_at or Timestamp.now()
    artifact = ModelArtifact(
        version="",
        trained_at=trained_at,
        feature_names=stats.feature_names,
        stats=stats,
        gaussian=gaussian,
        iforest=forest,
        training_window_days=training_window_days,
        iforest_threshold=iforest_threshold,
    )
    artifact.version = f"{content_hash(artifact.to_payload())}-{trained_at.epoch():.0f}"
    return artifact


def _normalized_vector(artifact: ModelArtifact, row: FeatureRow) -> np.ndarray:
    try:
        raw = row.to_vector(artifact.feature_names)
    except KeyError as exc:
        raise ScoringError(f"feature row missing {exc}") from exc
    return artifact.stats.normalize(np.array(raw, dtype=float))[0]


def score_event(artifact: ModelArtifact, row: FeatureRow) -> ScoreResult:
    """Score one feature row against the artifact.

    Both thresholds are strict: a score exactly at the threshold is not
    anomalous.
    """
    z = _normalized_vector(artifact, row)
    s_mahal = mahalanobis_score(artifact.gaussian, z)
    s_forest = iforest_score(artifact.iforest, z)
    mahal_hit = s_mahal > artifact.gaussian.tau
    forest_hit = s_forest > artifact.iforest_threshold
    detector = None
    if mahal_hit:
        detector = "mahalanobis"
    elif forest_hit:
        detector = "isolation_forest"
    return ScoreResult(
        mahalanobis=s_mahal,
        iforest=s_forest,
        is_anomalous=mahal_hit or forest_hit,
        detector=detector,
    )


def detect_stream(
    artifact: ModelArtifact,
    rows: Iterable[FeatureRow],
    timestamps: Optional[Iterable[Timestamp]] = None,
) -> Iterator[EmergentThreat]:
    """Yield one EmergentThreat event per anomalous row.

    ``timestamps`` pairs rows with their wall-clock times; without it
    events are stamped at scoring time.
    """
    ts_iter = iter(timestamps) if timestamps is not None else None
    for row in rows:
        ts = next(ts_iter) if ts_iter is not None else Timestamp.now()
        result = score_event(artifact, row)
        if not result.is_anomalous:
            continue
        yield EmergentThreat(
            timestamp=ts,
            ip=numeric_to_ip(int(row.ip_numeric)),
            anomaly_score=result.anomaly_score,
            features=row.as_dict(),
            detector=result.detector,
            model_version=artifact.version,
        )
