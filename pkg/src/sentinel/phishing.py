"""URL risk scoring: blacklist lookup plus lexical heuristics.

Scoring is stateless; a verdict depends only on the URL, the blacklist
and the configured weights.  Scores run 0 (benign) to 100 (certain);
a blacklist hit pins the score at 100.
"""

from __future__ import annotations

import re
import time
from collections import OrderedDict
from dataclasses import dataclass, field
from typing import Iterable, List, Optional, Sequence, Set, Tuple
from urllib.parse import urlsplit

from .events import DetectionMethod, PhishingAlert, Timestamp

DEFAULT_BRANDS = ["google.com", "microsoft.com", "apple.com", "paypal.com"]
DEFAULT_KEYWORDS = ["login", "verify", "update"]

_PCT_RE = re.compile(r"%[0-9A-Fa-f]{2}")


class InvalidUrlError(ValueError):
    pass


@dataclass(frozen=True)
class UrlParts:
    scheme: str  # "http" | "https" | "other"
    host: str
    registered_domain: str
    subdomain_depth: int
    path: str
    query: str
    percent_encoded_count: int


@dataclass
class HeuristicWeights:
    brand_similarity: int = 40
    first_host_keyword: int = 30
    extra_host_keyword: int = 15
    host_keyword_cap: int = 45
    path_keyword: int = 10
    plain_http: int = 15
    multi_hyphen_domain: int = 25
    deep_subdomain: int = 20
    percent_encoding: int = 15
    flag_threshold: int = 70


@dataclass(frozen=True)
class PhishVerdict:
    url: str
    score: int
    method: DetectionMethod
    triggered: Tuple[str, ...]


class Blacklist:
    """Set of known-bad registered domains; lookup is case-insensitive."""

    def __init__(self, domains: Iterable[str] = ()):
        self._domains: Set[str] = {d.strip().lower() for d in domains if d.strip()}

    @classmethod
    def load(cls, path: str) -> "Blacklist":
        """Load one-domain-per-line UTF-8 text; `#` starts a comment."""
        domains = []
        with open(path, "r", encoding="utf-8") as fh:
            for line in fh:
                line = line.split("#", 1)[0].strip()
                if line:
                    domains.append(line)
        return cls(domains)

    def __contains__(self, domain: str) -> bool:
        return domain.lower() in self._domains

    def __len__(self) -> int:
        return len(self._domains)


def parse_url(text: str) -> UrlParts:
    if not text or not text.strip():
        raise InvalidUrlError("empty URL")
    text = text.strip()
    split = urlsplit(text)
    host = (split.hostname or "").lower()
    if not host:
        raise InvalidUrlError(f"no host in URL: {text!r}")
    if not re.fullmatch(r"[a-z0-9._\-]+", host):
        raise InvalidUrlError(f"invalid host in URL: {text!r}")
    scheme = split.scheme.lower()
    if scheme not in ("http", "https"):
        scheme = "other"
    labels = host.split(".")
    if len(labels) >= 2:
        registered = ".".join(labels[-2:])
        depth = len(labels) - 2
    else:
        registered = host
        depth = 0
    pq = split.path + split.query
    return UrlParts(
        scheme=scheme,
        host=host,
        registered_domain=registered,
        subdomain_depth=depth,
        path=split.path,
        query=split.query,
        percent_encoded_count=len(_PCT_RE.findall(pq)),
    )


def levenshtein(a: str, b: str) -> int:
    """Minimal edit distance with unit insert/delete/substitute costs."""
    if a == b:
        return 0
    if not a:
        return len(b)
    if not b:
        return len(a)
    prev = list(range(len(b) + 1))
    for i, ca in enumerate(a, start=1):
        cur = [i]
        for j, cb in enumerate(b, start=1):
            cur.append(min(
                prev[j] + 1,          # delete
                cur[j - 1] + 1,       # insert
                prev[j - 1] + (ca != cb),  # substitute
            ))
        prev = cur
    return prev[-1]


def check_blacklist(parts: UrlParts, blacklist: Blacklist) -> bool:
    return parts.registered_domain in blacklist


def heuristic_score(
    parts: UrlParts,
    weights: Optional[HeuristicWeights] = None,
    brands: Optional[Sequence[str]] = None,
    keywords: Optional[Sequence[str]] = None,
) -> Tuple[int, List[str]]:
    """Score a URL by its lexical indicators.

    Returns (score, names of triggered heuristics); score is capped
    at 100.
    """
    w = weights or HeuristicWeights()
    brands = DEFAULT_BRANDS if brands is None else brands
    keywords = DEFAULT_KEYWORDS if keywords is None else keywords
    score = 0
    triggered: List[str] = []

    for brand in brands:
        brand = brand.lower()
        # Length gap bounds the edit distance from below; skip the DP.
        if abs(len(parts.registered_domain) - len(brand)) > 2:
            continue
        if 1 <= levenshtein(parts.registered_domain, brand) <= 2:
            score += w.brand_similarity
            triggered.append("brand_similarity")
            break

    host_hits = [kw for kw in keywords if kw.lower() in parts.host]
    if host_hits:
        kw_score = w.first_host_keyword + w.extra_host_keyword * (len(host_hits) - 1)
        score += min(kw_score, w.host_keyword_cap)
        triggered.append("host_keyword")

    if any(kw.lower() in parts.path.lower() for kw in keywords):
        score += w.path_keyword
        triggered.append("path_keyword")

    if parts.scheme == "http":
        score += w.plain_http
        triggered.append("plain_http")

    leftmost = parts.registered_domain.split(".")[0]
    if leftmost.count("-") >= 2:
        score += w.multi_hyphen_domain
        triggered.append("multi_hyphen_domain")

    if parts.subdomain_depth >= 3:
        score += w.deep_subdomain
        triggered.append("deep_subdomain")

    if parts.percent_encoded_count >= 2:
        score += w.percent_encoding
        triggered.append("percent_encoding")

    return min(score, 100), triggered


def evaluate_url(
    url: str,
    blacklist: Optional[Blacklist] = None,
    weights: Optional[HeuristicWeights] = None,
    brands: Optional[Sequence[str]] = None,
    keywords: Optional[Sequence[str]] = None,
    now: Optional[Timestamp] = None,
) -> Tuple[PhishVerdict, Optional[PhishingAlert]]:
    """Evaluate one URL; returns the verdict and, if flagged, the alert event.

    Raises InvalidUrlError when no host can be extracted.
    """
    w = weights or HeuristicWeights()
    parts = parse_url(url)
    now = now or Timestamp.now()
    if blacklist is not None and check_blacklist(parts, blacklist):
        verdict = PhishVerdict(url, 100, DetectionMethod.BLACKLIST, ("blacklist",))
        return verdict, PhishingAlert(now, url, 100, DetectionMethod.BLACKLIST)
    score, triggered = heuristic_score(parts, w, brands, keywords)
    verdict = PhishVerdict(url, score, DetectionMethod.HEURISTIC, tuple(triggered))
    event = None
    if score >= w.flag_threshold:
        event = PhishingAlert(now, url, score, DetectionMethod.HEURISTIC)
    return verdict, event


class UrlEvaluator:
    """Convenience wrapper bundling config, with an optional LRU+TTL cache."""

    def __init__(
        self,
        blacklist: Optional[Blacklist] = None,
        weights: Optional[HeuristicWeights] = None,
        brands: Optional[Sequence[str]] = None,
        keywords: Optional[Sequence[str]] = None,
        cache_enabled: bool = False,
        cache_size: int = 10000,
        cache_ttl_secs: float = 300.0,
        clock=time.monotonic,
    ):
        self.blacklist = blacklist or Blacklist()
        self.weights = weights or HeuristicWeights()
        self.brands = list(DEFAULT_BRANDS if brands is None else brands)
        self.keywords = list(DEFAULT_KEYWORDS if keywords is None else keywords)
        self.cache_enabled = cache_enabled
        self.cache_size = cache_size
        self.cache_ttl_secs = cache_ttl_secs
        self._clock = clock
        self._cache: OrderedDict = OrderedDict()

    def evaluate(self, url: str, now: Optional[Timestamp] = None):
        if self.cache_enabled:
            hit = self._cache.get(url)
            if hit is not None and self._clock() - hit[0] < self.cache_ttl_secs:
                self._cache.move_to_end(url)
                return hit[1]
        result = evaluate_url(url, self.blacklist, self.weights,
                              self.brands, self.keywords, now=now)
        if self.cache_enabled:
            self._cache[url] = (self._clock(), result)
            self._cache.move_to_end(url)
            while len(self._cache) > self.cache_size:
                self._cache.popitem(last=False)
        return result
