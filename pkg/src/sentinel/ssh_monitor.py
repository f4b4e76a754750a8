"""sshd auth-log parsing and sliding-window brute-force detection.

A regex parser pulls timestamp/user/IP/port/status out of OpenSSH log
lines; a per-IP sliding window of failure timestamps raises a BruteForce
event once the count inside the window reaches the configured threshold.
"""

from __future__ import annotations

import logging
import re
import subprocess
import time
from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Iterator, List, Optional, Set, Tuple

from .events import BruteForce, IpAddress, ParseError, Timestamp

log = logging.getLogger(__name__)

# Optional syslog prefix: "Feb 12 15:23:01 host1 sshd[812]: "
_PREFIX = r"(?:(?P<ts>[A-Z][a-z]{2}\s+\d{1,2}\s+\d{2}:\d{2}:\d{2})\s+\S+\s+sshd\[\d+\]:\s+)?"
_IPV4 = r"(?P<ip>\d{1,3}(?:\.\d{1,3}){3})"

_FAILED_RE = re.compile(
    _PREFIX
    + r"Failed password for (?P<invalid>invalid user )?(?P<user>\S+) from "
    + _IPV4
    + r" port (?P<port>\d+) ssh2\s*$"
)
_ACCEPTED_RE = re.compile(
    _PREFIX
    + r"Accepted (?:password|publickey) for (?P<user>\S+) from "
    + _IPV4
    + r" port (?P<port>\d+) ssh2\s*$"
)
# Loose shape of an auth line whose address is not IPv4 (e.g. IPv6) so we
# can count those skips separately.
_AUTH_SHAPE_RE = re.compile(
    _PREFIX + r"(?:Failed password|Accepted (?:password|publickey)) for .* from (?P<addr>\S+) port \d+ ssh2\s*$"
)

# Tolerated clock skew for out-of-order records.
OUT_OF_ORDER_TOLERANCE_SECS = 5.0


@dataclass(frozen=True)
class SshAuthRecord:
    """One parsed sshd authentication line."""

    timestamp: Timestamp
    user: str
    ip: IpAddress
    port: int
    status: str  # "failed" | "accepted"
    invalid_user: bool
    raw: str

    @property
    def failed(self) -> bool:
        return self.status == "failed"


@dataclass
class BruteForceConfig:
    threshold: int = 5
    window_secs: float = 300.0
    poll_secs: float = 60.0
    cooldown_secs: Optional[float] = None  # None -> same as window
    whitelist: Set[str] = field(default_factory=set)

    def __post_init__(self):
        if self.threshold < 1:
            raise ValueError("threshold must be >= 1")
        if self.window_secs <= 0:
            raise ValueError("window_secs must be > 0")
        if self.cooldown_secs is None:
            self.cooldown_secs = self.window_secs
        if self.cooldown_secs < 0:
            raise ValueError("cooldown_secs must be >= 0")


@dataclass
class ParseStats:
    skipped: int = 0
    ipv6_skipped: int = 0
    dropped_out_of_order: int = 0


def parse_ssh_line(
    line: str,
    year: Optional[int] = None,
    stats: Optional[ParseStats] = None,
    fallback_timestamp: Optional[Timestamp] = None,
) -> Optional[SshAuthRecord]:
    """Parse one log line; returns None for lines outside the auth grammar.

    Non-matching lines are never an error.  Lines shaped like auth entries
    but carrying a non-IPv4 address (IPv6) are skipped with a counted
    warning.  Lines without a syslog prefix use ``fallback_timestamp``
    when given, otherwise they are skipped.
    """
    for regex, status in ((_FAILED_RE, "failed"), (_ACCEPTED_RE, "accepted")):
        m = regex.match(line)
        if not m:
            continue
        if m.group("ts"):
            ts = Timestamp.parse(m.group("ts"), default_year=year)
        elif fallback_timestamp is not None:
            ts = fallback_timestamp
        else:
            if stats:
                stats.skipped += 1
            return None
        try:
            ip = IpAddress.parse(m.group("ip"))
        except ParseError:
            if stats:
                stats.ipv6_skipped += 1
                stats.skipped += 1
            return None
        return SshAuthRecord(
            timestamp=ts,
            user=m.group("user"),
            ip=ip,
            port=int(m.group("port")),
            status=status,
            invalid_user=bool(m.groupdict().get("invalid")),
            raw=line.rstrip("\n"),
        )
    if _AUTH_SHAPE_RE.match(line):
        if stats:
            stats.ipv6_skipped += 1
            stats.skipped += 1
        log.debug("skipping non-IPv4 auth line: %s", line.rstrip())
        return None
    if stats:
        stats.skipped += 1
    return None


class BruteForceDetector:
    """Per-IP sliding-window failure counter with alert cooldown.

    Records must arrive in nondecreasing timestamp order per source; up to
    5 seconds of skew is tolerated, older records are dropped with a
    warning.  Accepted logins do not reset failure counts.
    """

    def __init__(self, cfg: BruteForceConfig):
        self.cfg = cfg
        self._failures: dict = {}  # ip str -> deque of epoch floats
        self._last_alert: dict = {}  # ip str -> epoch float
        self._max_seen: Optional[float] = None
        self.stats = ParseStats()

    def ingest(self, rec: SshAuthRecord) -> Optional[BruteForce]:
        now = rec.timestamp.epoch()
        if self._max_seen is not None and now < self._max_seen - OUT_OF_ORDER_TOLERANCE_SECS:
            self.stats.dropped_out_of_order += 1
            log.warning("dropping out-of-order record at %s (watermark %s)",
                        rec.timestamp, self._max_seen)
            return None
        self._max_seen = max(self._max_seen or now, now)

        key = str(rec.ip)
        if rec.failed:
            window = self._failures.setdefault(key, deque())
            window.append(now)
        else:
            window = self._failures.get(key)
            if window is None:
                return None

        cutoff = now - self.cfg.window_secs
        while window and window[0] < cutoff:
            window.popleft()

        if not rec.failed:
            return None
        if len(window) < self.cfg.threshold:
            return None
        if key in self.cfg.whitelist:
            return None
        last = self._last_alert.get(key)
        if last is not None and now - last < self.cfg.cooldown_secs:
            return None
        self._last_alert[key] = now
        return BruteForce(timestamp=rec.timestamp, ip=rec.ip, failed_attempts=len(window))


def scan_batch(
    lines: Iterable[str],
    cfg: Optional[BruteForceConfig] = None,
    year: Optional[int] = None,
) -> Tuple[List[SshAuthRecord], List[BruteForce], int]:
    """Fold parse + ingest over a batch of lines.

    Returns (records, events, skipped_count).
    """
    cfg = cfg or BruteForceConfig()
    detector = BruteForceDetector(cfg)
    stats = ParseStats()
    records: List[SshAuthRecord] = []
    events: List[BruteForce] = []
    for line in lines:
        rec = parse_ssh_line(line, year=year, stats=stats)
        if rec is None:
            continue
        records.append(rec)
        event = detector.ingest(rec)
        if event is not None:
            events.append(event)
    return records, events, stats.skipped


class TailSource:
    """Poll a log file (or a shell command's stdout) for new lines.

    File sources resume from the stored offset; truncation (rotation)
    restarts from offset 0.  A missing source degrades health rather than
    raising; polling retries with backoff.
    """

    def __init__(self, path: Optional[str] = None, command: Optional[str] = None,
                 poll_secs: float = 60.0):
        if (path is None) == (command is None):
            raise ValueError("exactly one of path or command is required")
        self.path = path
        self.command = command
        self.poll_secs = poll_secs
        self.healthy = True
        self._offset = 0
        self._backoff = poll_secs

    def poll(self) -> List[str]:
        """One polling pass; returns any new complete lines."""
        if self.command is not None:
            return self._poll_command()
        return self._poll_file()

    def _poll_file(self) -> List[str]:
        try:
            with open(self.path, "r", errors="replace") as fh:
                fh.seek(0, 2)
                size = fh.tell()
                if size < self._offset:  # truncated / rotated
                    self._offset = 0
                fh.seek(self._offset)
                chunk = fh.read()
                self._offset = fh.tell()
        except OSError as exc:
            if self.healthy:
                log.warning("log source %s unavailable: %s", self.path, exc)
            self.healthy = False
            self._backoff = min(self._backoff * 2, 300.0)
            return []
        self.healthy = True
        self._backoff = self.poll_secs
        return chunk.splitlines()

    def _poll_command(self) -> List[str]:
        try:
            out = subprocess.run(
                self.command, shell=True, capture_output=True, text=True, timeout=30
            )
        except (OSError, subprocess.TimeoutExpired) as exc:
            log.warning("log command failed: %s", exc)
            self.healthy = False
            return []
        if out.returncode != 0:
            self.healthy = False
            return []
        self.healthy = True
        return out.stdout.splitlines()

    def follow(self, stop=None) -> Iterator[str]:
        """Blocking generator yielding lines forever (or until stop() is true)."""
        while stop is None or not stop():
            for line in self.poll():
                yield line
            time.sleep(self._backoff if not self.healthy else self.poll_secs)


def tail_source(path: Optional[str] = None, command: Optional[str] = None,
                poll_secs: float = 60.0) -> TailSource:
    return TailSource(path=path, command=command, poll_secs=poll_secs)
