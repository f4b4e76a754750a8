"""Rolling-window retraining, validation gating, versioned persistence
and zero-downtime model swap.

A retrain fits on the earliest portion of the window and validates on
the most recent hold-out slice; candidates whose hold-out flag rate
exceeds the acceptance bound are rejected and never become ``current``.
"""

from __future__ import annotations

import json
import logging
import os
import tempfile
import threading
import time
from dataclasses import dataclass, field
from datetime import datetime, timedelta, timezone
from pathlib import Path
from typing import Iterator, List, Optional, Sequence, Tuple

from .events import Timestamp
from .etd.detector import ModelArtifact, content_hash, score_event, train_model
from .etd.features import FeatureRow
from .etd.gaussian import TrainingError

log = logging.getLogger(__name__)

TimedRow = Tuple[Timestamp, FeatureRow]


class CorruptArtifactError(RuntimeError):
    pass


class NoModelError(RuntimeError):
    pass


class ScheduleError(ValueError):
    pass


@dataclass
class RetrainConfig:
    window_days: int = 30
    holdout_fraction: float = 0.2
    quantile: float = 0.99
    max_holdout_flag_rate: Optional[float] = None  # None -> 2*(1-q)
    schedule: str = "0 3 * * 1"  # weekly, 03:00 Monday
    seed: int = 0

    def __post_init__(self):
        if self.window_days < 1:
            raise ValueError("window_days must be >= 1")
        if not 0.0 < self.holdout_fraction < 1.0:
            raise ValueError("holdout_fraction must be in (0,1)")
        if self.max_holdout_flag_rate is None:
            self.max_holdout_flag_rate = 2.0 * (1.0 - self.quantile)


@dataclass
class ValidationReport:
    accepted: bool
    holdout_flag_rate: float
    holdout_size: int
    train_size: int
    max_flag_rate: float
    reason: str = ""


def select_window(rows: Sequence[TimedRow], now: Timestamp, window_days: int) -> List[TimedRow]:
    """Rows with timestamp in the closed interval [now - window_days, now]."""
    start = now.add_seconds(-window_days * 86400)
    selected = [(ts, row) for ts, row in rows if start <= ts <= now]
    selected.sort(key=lambda pair: pair[0])
    if not selected:
        raise TrainingError(f"no rows inside the {window_days}-day training window")
    return selected


def retrain(rows: Sequence[TimedRow], cfg: RetrainConfig,
            trained_at: Optional[Timestamp] = None) -> Tuple[ModelArtifact, ValidationReport]:
    """Fit a candidate on the older slice and validate on the recent hold-out."""
    rows = sorted(rows, key=lambda pair: pair[0])
    split = int(round(len(rows) * (1.0 - cfg.holdout_fraction)))
    train_rows = [row for _, row in rows[:split]]
    holdout_rows = [row for _, row in rows[split:]]
    if not holdout_rows:
        raise TrainingError("hold-out slice is empty; not enough rows")

    artifact = train_model(
        train_rows,
        q=cfg.quantile,
        seed=cfg.seed,
        training_window_days=cfg.window_days,
        trained_at=trained_at,
    )
    flagged = sum(1 for row in holdout_rows if score_event(artifact, row).is_anomalous)
    rate = flagged / len(holdout_rows)
    accepted = rate <= cfg.max_holdout_flag_rate
    report = ValidationReport(
        accepted=accepted,
        holdout_flag_rate=rate,
        holdout_size=len(holdout_rows),
        train_size=len(train_rows),
        max_flag_rate=cfg.max_holdout_flag_rate,
        reason="" if accepted else
        f"hold-out flag rate {rate:.4f} exceeds bound {cfg.max_holdout_flag_rate:.4f}",
    )
    return artifact, report


def _atomic_write(path: Path, data: str) -> None:
    fd, tmp = tempfile.mkstemp(dir=str(path.parent), prefix=".tmp-")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def persist_artifact(artifact: ModelArtifact, directory) -> Path:
    """Write the artifact atomically and point ``current`` at it."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    path = directory / f"etd_model_{artifact.version}.json"
    _atomic_write(path, json.dumps(artifact.to_payload()))
    _atomic_write(directory / "current", artifact.version)
    return path


def load_artifact(path) -> ModelArtifact:
    """Load an artifact, verifying the version content hash."""
    try:
        with open(path, "r") as fh:
            payload = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise CorruptArtifactError(f"cannot read artifact {path}: {exc}") from exc
    version = payload.get("version", "")
    expected = version.split("-", 1)[0]
    if content_hash(payload) != expected:
        raise CorruptArtifactError(f"artifact {path} content hash mismatch")
    return ModelArtifact.from_payload(payload)


def load_current(directory) -> ModelArtifact:
    directory = Path(directory)
    pointer = directory / "current"
    if not pointer.exists():
        raise NoModelError(f"no current model in {directory}")
    version = pointer.read_text().strip()
    return load_artifact(directory / f"etd_model_{version}.json")


class ModelRegistry:
    """Atomic holder for the active artifact: one writer, many readers.

    Readers never observe a partial state; a swap replaces the whole
    artifact reference at once.
    """

    def __init__(self, artifact: Optional[ModelArtifact] = None):
        self._artifact = artifact
        self._lock = threading.Lock()

    def get(self) -> ModelArtifact:
        artifact = self._artifact  # single attribute read is atomic
        if artifact is None:
            raise NoModelError("no model loaded")
        return artifact

    def swap(self, candidate: ModelArtifact) -> None:
        with self._lock:
            current = self._artifact
            if current is not None and current.version == candidate.version:
                return  # already active
            self._artifact = candidate


def swap_model(registry: ModelRegistry, candidate: ModelArtifact) -> None:
    registry.swap(candidate)


# --- scheduling -----------------------------------------------------------

_CRON_RANGES = ((0, 59), (0, 23), (1, 31), (1, 12), (0, 6))


@dataclass
class ScheduleSpec:
    """Either a fixed interval in seconds or a 5-field cron expression
    (numbers and ``*`` only)."""

    interval_secs: Optional[float] = None
    cron_fields: Optional[tuple] = None

    @classmethod
    def parse(cls, text: str) -> "ScheduleSpec":
        text = text.strip()
        if text.startswith("every "):
            tail = text[len("every "):].strip()
            try:
                if tail.endswith("s"):
                    secs = float(tail[:-1])
                elif tail.endswith("m"):
                    secs = float(tail[:-1]) * 60
                elif tail.endswith("h"):
                    secs = float(tail[:-1]) * 3600
                elif tail.endswith("d"):
                    secs = float(tail[:-1]) * 86400
                else:
                    secs = float(tail)
            except ValueError:
                raise ScheduleError(f"bad interval spec: {text!r}")
            if secs <= 0:
                raise ScheduleError(f"interval must be positive: {text!r}")
            return cls(interval_secs=secs)
        fields = text.split()
        if len(fields) != 5:
            raise ScheduleError(f"cron spec needs 5 fields: {text!r}")
        parsed = []
        for value, (lo, hi) in zip(fields, _CRON_RANGES):
            if value == "*":
                parsed.append(None)
                continue
            if not value.lstrip("-").isdigit():
                raise ScheduleError(f"bad cron field {value!r} in {text!r}")
            number = int(value)
            if not lo <= number <= hi:
                raise ScheduleError(f"cron field {value!r} out of range [{lo},{hi}]")
            parsed.append(number)
        return cls(cron_fields=tuple(parsed))

    def next_fire(self, after: Timestamp) -> Timestamp:
        if self.interval_secs is not None:
            return after.add_seconds(self.interval_secs)
        minute, hour, dom, month, dow = self.cron_fields
        # cron day-of-week counts 0=Sunday; datetime.weekday() counts 0=Monday
        weekday = None if dow is None else (dow - 1) % 7
        dt = after.instant.replace(second=0) + timedelta(minutes=1)
        # Minute-resolution scan is fine: the horizon is at most ~4 years.
        for _ in range(366 * 4 * 24 * 60):
            if ((minute is None or dt.minute == minute)
                    and (hour is None or dt.hour == hour)
                    and (dom is None or dt.day == dom)
                    and (month is None or dt.month == month)
                    and (weekday is None or dt.weekday() == weekday)):
                return Timestamp(dt)
            dt += timedelta(minutes=1)
        raise ScheduleError("cron spec never fires")


def schedule_retrain(spec: str, clock, stop=None, sleep=None) -> Iterator[Timestamp]:
    """Yield one trigger per schedule tick.

    ``clock`` returns the current Timestamp; ticks missed while the
    process slept coalesce into a single trigger on wake.
    """
    parsed = ScheduleSpec.parse(spec)
    next_fire = parsed.next_fire(clock())
    while stop is None or not stop():
        now = clock()
        if now >= next_fire:
            yield next_fire
            # Coalesce any further missed ticks.
            next_fire = parsed.next_fire(now)
        elif sleep is not None:
            sleep(min(next_fire.epoch() - now.epoch(), 60.0))
        # With no sleep function the caller's clock must advance (tests).
