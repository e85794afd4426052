"""Spherical-earth geometry: distances, radius queries and polyline sampling.

All distances are kilometres on a sphere of radius ``EARTH_RADIUS_KM``.
"""

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

EARTH_RADIUS_KM = 6371.0088
KM_PER_MILE = 1.609344

# Substation flood neighbourhood: half a mile.
HALF_MILE_KM = 0.5 * KM_PER_MILE


@dataclass(frozen=True)
class GeoPoint:
    lat: float
    lon: float

    def __post_init__(self):
        if not (math.isfinite(self.lat) and math.isfinite(self.lon)):
            raise ValueError(f"non-finite coordinate ({self.lat}, {self.lon})")
        if not -90.0 <= self.lat <= 90.0:
            raise ValueError(f"latitude {self.lat} outside [-90, 90]")
        if not -180.0 <= self.lon <= 180.0:
            raise ValueError(f"longitude {self.lon} outside [-180, 180]")


@dataclass(frozen=True)
class BoundingBox:
    min_lat: float
    max_lat: float
    min_lon: float
    max_lon: float

    def __post_init__(self):
        if not (self.min_lat < self.max_lat and self.min_lon < self.max_lon):
            raise ValueError(f"degenerate bounding box {self}")

    def contains(self, p: GeoPoint) -> bool:
        return (self.min_lat <= p.lat <= self.max_lat
                and self.min_lon <= p.lon <= self.max_lon)

    def nearest_point(self, p: GeoPoint) -> GeoPoint:
        """Closest point of the box to ``p`` (clamping in lat/lon)."""
        return GeoPoint(min(max(p.lat, self.min_lat), self.max_lat),
                        min(max(p.lon, self.min_lon), self.max_lon))

    def ring(self) -> list:
        """Closed (lat, lon) ring of the box corners."""
        return [(self.min_lat, self.min_lon), (self.min_lat, self.max_lon),
                (self.max_lat, self.max_lon), (self.max_lat, self.min_lon),
                (self.min_lat, self.min_lon)]


@dataclass(frozen=True)
class Polyline:
    vertices: tuple

    def __post_init__(self):
        object.__setattr__(self, "vertices", tuple(self.vertices))
        if len(self.vertices) < 2:
            raise ValueError("polyline needs at least two vertices")
        for a, b in zip(self.vertices, self.vertices[1:]):
            if a == b:
                raise ValueError(f"repeated consecutive vertex {a}")

    def length_km(self) -> float:
        return sum(haversine_km(a, b) for a, b in zip(self.vertices, self.vertices[1:]))


def haversine_arrays(lat1, lon1, lat2, lon2):
    """Vectorised great-circle distance in km; inputs in degrees, broadcastable."""
    lat1, lon1, lat2, lon2 = map(np.radians, (lat1, lon1, lat2, lon2))
    dlat = lat2 - lat1
    dlon = lon2 - lon1
    h = np.sin(dlat / 2.0) ** 2 + np.cos(lat1) * np.cos(lat2) * np.sin(dlon / 2.0) ** 2
    return 2.0 * EARTH_RADIUS_KM * np.arcsin(np.sqrt(np.clip(h, 0.0, 1.0)))


def haversine_km(a: GeoPoint, b: GeoPoint) -> float:
    if a == b:
        return 0.0
    return float(haversine_arrays(a.lat, a.lon, b.lat, b.lon))


def _to_unit(p: GeoPoint) -> np.ndarray:
    la, lo = math.radians(p.lat), math.radians(p.lon)
    return np.array([math.cos(la) * math.cos(lo), math.cos(la) * math.sin(lo), math.sin(la)])


def _from_unit(v: np.ndarray) -> GeoPoint:
    x, y, z = v / np.linalg.norm(v)
    return GeoPoint(math.degrees(math.asin(max(-1.0, min(1.0, z)))),
                    math.degrees(math.atan2(y, x)))


def interpolate_great_circle(a: GeoPoint, b: GeoPoint, fraction: float) -> GeoPoint:
    """Point at ``fraction`` of the way from ``a`` to ``b`` along the great circle."""
    if fraction <= 0.0:
        return a
    if fraction >= 1.0:
        return b
    ua, ub = _to_unit(a), _to_unit(b)
    omega = math.acos(max(-1.0, min(1.0, float(ua @ ub))))
    if omega < 1e-15:
        return a
    s = math.sin(omega)
    return _from_unit(math.sin((1 - fraction) * omega) / s * ua
                      + math.sin(fraction * omega) / s * ub)


def sample_polyline(line: Polyline, spacing: float) -> list:
    """Points along ``line`` no more than ``spacing`` km apart.

    Every vertex is kept; inside each segment points are placed every
    ``spacing`` km from its first vertex, so halving the spacing keeps all
    previous samples.
    """
    if not spacing > 0:
        raise ValueError(f"spacing must be positive, got {spacing}")
    out = [line.vertices[0]]
    for a, b in zip(line.vertices, line.vertices[1:]):
        length = haversine_km(a, b)
        # tolerance keeps an exact multiple (10 km / 2 km) from gaining a sliver
        n = max(1, math.ceil(length / spacing - 1e-9))
        out.extend(interpolate_great_circle(a, b, k * spacing / length) for k in range(1, n))
        out.append(b)
    return out


def points_within_radius(center: GeoPoint, radius: float,
                         candidates: Sequence[GeoPoint]) -> list:
    """Candidates whose great-circle distance to ``center`` is <= ``radius`` km."""
    if not radius > 0:
        raise ValueError(f"radius must be positive, got {radius}")
    if not candidates:
        return []
    lat = np.fromiter((c.lat for c in candidates), float, len(candidates))
    lon = np.fromiter((c.lon for c in candidates), float, len(candidates))
    d = haversine_arrays(center.lat, center.lon, lat, lon)
    return [c for c, dist in zip(candidates, d) if c == center or dist <= radius]


def initial_bearing_deg(a: GeoPoint, b: GeoPoint) -> float:
    """Compass bearing from ``a`` towards ``b`` in [0, 360)."""
    la1, la2 = math.radians(a.lat), math.radians(b.lat)
    dlon = math.radians(b.lon - a.lon)
    x = math.sin(dlon) * math.cos(la2)
    y = math.cos(la1) * math.sin(la2) - math.sin(la1) * math.cos(la2) * math.cos(dlon)
    return math.degrees(math.atan2(x, y)) % 360.0
