"""The single-agent daemon: concurrent monitors, one dispatch pipeline.

Each monitor runs in its own supervised thread and pushes events onto a
bounded queue; the dispatcher serializes them to the configured sinks
and applies the mitigation policy.  A crashed monitor is restarted with
exponential backoff.
"""

from __future__ import annotations

import json
import logging
import queue
import threading
import time
from dataclasses import dataclass, field
from typing import Callable, List, Optional

from .config import AgentConfig
from .events import SecurityEvent, Timestamp, serialize_event
from .etd.detector import detect_stream, score_event
from .etd.features import StreamingFeatureExtractor
from .etd.geo import GeoTable
from .events import EmergentThreat, numeric_to_ip
from .mitigation import mitigate
from .phishing import Blacklist, UrlEvaluator
from .etd.gaussian import TrainingError
from .retraining import (
    ModelRegistry,
    NoModelError,
    load_current,
    persist_artifact,
    retrain,
    schedule_retrain,
    select_window,
)
from .sinks import DeadLetterLog, build_sink, dispatch_alert
from .ssh_monitor import BruteForceDetector, TailSource, parse_ssh_line, ParseStats

log = logging.getLogger(__name__)

QUEUE_CAPACITY = 10000
SHUTDOWN_GRACE_SECS = 5.0


class _Supervised(threading.Thread):
    """Runs a loop body repeatedly; restarts it after a crash with backoff."""

    def __init__(self, name: str, body: Callable[[], None], stop_event: threading.Event,
                 on_restart: Optional[Callable[[str, BaseException], None]] = None):
        super().__init__(name=name, daemon=True)
        self.body = body
        self.stop_event = stop_event
        self.on_restart = on_restart
        self.restarts = 0

    def run(self):
        backoff = 0.1
        while not self.stop_event.is_set():
            try:
                self.body()
                backoff = 0.1
            except Exception as exc:
                self.restarts += 1
                log.exception("task %s crashed; restarting in %.1fs", self.name, backoff)
                if self.on_restart:
                    self.on_restart(self.name, exc)
                self.stop_event.wait(backoff)
                backoff = min(backoff * 2, 30.0)


class Agent:
    """Wires monitors, the model registry, sinks and mitigation together."""

    ROW_BUFFER_LIMIT = 500_000

    def __init__(self, cfg: AgentConfig, clock=Timestamp.now):
        self.cfg = cfg
        self.clock = clock
        self._timed_rows: List[tuple] = []
        self.stop_event = threading.Event()
        self.queue: "queue.Queue" = queue.Queue(maxsize=QUEUE_CAPACITY)
        self.dead_letter = DeadLetterLog(cfg.dead_letter_path)
        self.overflow_count = 0
        self.sinks = [build_sink(sc) for sc in cfg.sinks]
        self.registry = ModelRegistry()
        self.mitigations: List[dict] = []
        self._threads: List[_Supervised] = []
        self._restart_log: List[str] = []

        blacklist = Blacklist()
        if cfg.phishing.blacklist_path:
            blacklist = Blacklist.load(cfg.phishing.blacklist_path)
        self.url_evaluator = UrlEvaluator(
            blacklist=blacklist,
            weights=cfg.phishing.weights,
            brands=cfg.phishing.brands,
            keywords=cfg.phishing.keywords,
            cache_enabled=cfg.phishing.cache_enabled,
            cache_size=cfg.phishing.cache_size,
            cache_ttl_secs=cfg.phishing.cache_ttl_secs,
        )

        geo = None
        if cfg.etd.geo_table_path:
            geo = GeoTable.load(cfg.etd.geo_table_path, centroid=cfg.etd.centroid)
        self.feature_extractor = StreamingFeatureExtractor(
            geo=geo, freq_window_secs=cfg.etd.freq_window_secs)

        try:
            self.registry.swap(load_current(cfg.etd.model_dir))
            log.info("loaded model %s", self.registry.get().version)
        except NoModelError:
            log.warning("no anomaly model available; emergent detection idle")

    # -- event plumbing ----------------------------------------------------

    def emit(self, event: SecurityEvent) -> None:
        while True:
            try:
                self.queue.put_nowait(event)
                return
            except queue.Full:
                try:
                    oldest = self.queue.get_nowait()
                except queue.Empty:
                    continue
                self.overflow_count += 1
                self.dead_letter.record(serialize_event(oldest), "queue overflow")

    def _dispatch_loop(self):
        while not self.stop_event.is_set() or not self.queue.empty():
            try:
                event = self.queue.get(timeout=0.2)
            except queue.Empty:
                if self.stop_event.is_set():
                    return
                continue
            self._handle(event)

    def _handle(self, event: SecurityEvent) -> None:
        dispatch_alert(event, self.sinks, self.dead_letter)
        action = mitigate(event, self.cfg.mitigation)
        if action is not None:
            self.mitigations.append(action.to_dict())

    # -- monitors ----------------------------------------------------------

    def _ssh_loop(self):
        source = TailSource(
            path=self.cfg.ssh_source_path,
            command=self.cfg.ssh_source_command,
            poll_secs=self.cfg.ssh.poll_secs,
        ) if (self.cfg.ssh_source_path or self.cfg.ssh_source_command) else None
        if source is None:
            self.stop_event.wait()
            return
        detector = BruteForceDetector(self.cfg.ssh)
        stats = ParseStats()
        while not self.stop_event.is_set():
            for line in source.poll():
                rec = parse_ssh_line(line, year=self.cfg.ssh_year, stats=stats,
                                     fallback_timestamp=self.clock())
                if rec is None:
                    continue
                event = detector.ingest(rec)
                if event is not None:
                    self.emit(event)
                self._score_record(rec)
            self.stop_event.wait(min(self.cfg.ssh.poll_secs, 0.2))

    def _score_record(self, rec) -> None:
        row = self.feature_extractor.extract(rec)
        self._timed_rows.append((rec.timestamp, row))
        if len(self._timed_rows) > self.ROW_BUFFER_LIMIT:
            del self._timed_rows[: len(self._timed_rows) - self.ROW_BUFFER_LIMIT]
        try:
            artifact = self.registry.get()
        except NoModelError:
            return
        result = score_event(artifact, row)
        if result.is_anomalous:
            self.emit(EmergentThreat(
                timestamp=rec.timestamp,
                ip=rec.ip,
                anomaly_score=result.anomaly_score,
                features=row.as_dict(),
                detector=result.detector,
                model_version=artifact.version,
            ))

    def _url_feed_loop(self):
        if not self.cfg.url_feed:
            self.stop_event.wait()
            return
        source = TailSource(path=self.cfg.url_feed, poll_secs=0.2)
        while not self.stop_event.is_set():
            for line in source.poll():
                line = line.strip()
                if not line:
                    continue
                try:
                    url = json.loads(line)["url"]
                except (json.JSONDecodeError, KeyError, TypeError):
                    log.warning("malformed url feed line: %s", line)
                    continue
                try:
                    _, event = self.url_evaluator.evaluate(url, now=self.clock())
                except ValueError:
                    continue
                if event is not None:
                    self.emit(event)
            self.stop_event.wait(0.2)

    def _retrain_loop(self):
        triggers = schedule_retrain(
            self.cfg.retrain.schedule,
            clock=self.clock,
            stop=self.stop_event.is_set,
            sleep=lambda secs: self.stop_event.wait(min(secs, 1.0)),
        )
        for fired_at in triggers:
            log.info("retrain trigger at %s", fired_at)
            self.retrain_now(fired_at)

    def retrain_now(self, now: Optional[Timestamp] = None) -> bool:
        """Retrain from buffered feature rows; swap in the candidate if it
        passes validation.  Returns True when a new model went live."""
        now = now or self.clock()
        try:
            window = select_window(list(self._timed_rows), now, self.cfg.retrain.window_days)
            artifact, report = retrain(window, self.cfg.retrain, trained_at=now)
        except TrainingError as exc:
            log.warning("retrain aborted: %s", exc)
            return False
        if not report.accepted:
            log.warning("retrain candidate rejected: %s", report.reason)
            return False
        persist_artifact(artifact, self.cfg.etd.model_dir)
        self.registry.swap(artifact)
        log.info("swapped in model %s (holdout flag rate %.4f)",
                 artifact.version, report.holdout_flag_rate)
        return True

    # -- lifecycle ---------------------------------------------------------

    def start(self) -> None:
        def note_restart(name, exc):
            self._restart_log.append(f"{name}: {exc!r}")

        specs = [
            ("dispatcher", self._dispatch_loop),
            ("ssh-monitor", self._ssh_loop),
            ("url-feed", self._url_feed_loop),
            ("retrain-scheduler", self._retrain_loop),
        ]
        for name, body in specs:
            thread = _Supervised(name, body, self.stop_event, on_restart=note_restart)
            self._threads.append(thread)
            thread.start()

    def stop(self, timeout: float = SHUTDOWN_GRACE_SECS) -> None:
        """Signal shutdown and drain the queue within the grace period."""
        self.stop_event.set()
        deadline = time.monotonic() + timeout
        for thread in self._threads:
            thread.join(max(0.0, deadline - time.monotonic()))
        # Flush anything a monitor managed to enqueue after the dispatcher quit.
        while True:
            try:
                event = self.queue.get_nowait()
            except queue.Empty:
                break
            self._handle(event)

    def run_forever(self) -> int:
        self.start()
        try:
            while not self.stop_event.is_set():
                time.sleep(0.5)
        except KeyboardInterrupt:
            pass
        self.stop()
        return 0


def run_agent(cfg: AgentConfig) -> int:
    agent = Agent(cfg)
    return agent.run_forever()
