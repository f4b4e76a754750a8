"""IP geolocation lookup against a CIDR table, plus haversine distance."""

from __future__ import annotations

import csv
import ipaddress
import math
from typing import Optional, Tuple

EARTH_RADIUS_KM = 6371.0


def haversine_km(lat1: float, lon1: float, lat2: float, lon2: float) -> float:
    phi1, phi2 = math.radians(lat1), math.radians(lat2)
    dphi = math.radians(lat2 - lat1)
    dlam = math.radians(lon2 - lon1)
    a = math.sin(dphi / 2) ** 2 + math.cos(phi1) * math.cos(phi2) * math.sin(dlam / 2) ** 2
    return 2 * EARTH_RADIUS_KM * math.asin(math.sqrt(a))


class GeoTable:
    """CIDR prefix -> (lat, lon) with longest-prefix match.

    ``centroid`` is the deployment's reference location; distances are
    measured from it.  Unknown IPs return None from lookups so callers
    can impute.
    """

    def __init__(self, entries=None, centroid: Tuple[float, float] = (0.0, 0.0)):
        # entries: iterable of (cidr_text, lat, lon)
        self._nets = []
        for cidr, lat, lon in entries or []:
            net = ipaddress.ip_network(cidr, strict=False)
            self._nets.append((net, (float(lat), float(lon))))
        self._nets.sort(key=lambda item: item[0].prefixlen, reverse=True)
        self.centroid = centroid
        self.misses = 0

    @classmethod
    def load(cls, path: str, centroid: Tuple[float, float] = (0.0, 0.0)) -> "GeoTable":
        """Load a CSV of ``cidr,lat,lon`` rows (header optional)."""
        entries = []
        with open(path, newline="") as fh:
            for row in csv.reader(fh):
                if not row or row[0].strip().lower() == "cidr":
                    continue
                entries.append((row[0].strip(), float(row[1]), float(row[2])))
        return cls(entries, centroid)

    def lookup(self, ip: str) -> Optional[Tuple[float, float]]:
        addr = ipaddress.ip_address(ip)
        for net, loc in self._nets:
            if addr in net:
                return loc
        return None

    def distance_km(self, ip: str) -> Optional[float]:
        """Haversine distance from the reference centroid; None if unknown."""
        loc = self.lookup(ip)
        if loc is None:
            self.misses += 1
            return None
        return haversine_km(loc[0], loc[1], self.centroid[0], self.centroid[1])
