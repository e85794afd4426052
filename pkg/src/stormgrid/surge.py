"""Storm-surge depth grids (MEOW-style) and substation inundation.

A surge file holds maximum-water-depth cells for several scenarios, each
identified by basin, storm category, direction of motion, forward speed and
tide level. Substations read the deepest cell within half a mile and
subtract their pad elevation.
"""

import csv
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
import shapely

from .errors import NotFoundError, ParseError, ValidationError
from .geo import HALF_MILE_KM, GeoPoint, haversine_arrays, haversine_km, initial_bearing_deg
from .hurricane import HurricaneTrack, saffir_simpson_category

log = logging.getLogger(__name__)

SURGE_COLUMNS = ("basin", "category", "direction", "speed_mph", "tide", "lat", "lon", "depth", "unit")
TIDES = ("mean", "high")
FEET_TO_M = 0.3048
KM_PER_H_TO_MPH = 1.0 / 1.609344

_COMPASS16 = ("N", "NNE", "NE", "ENE", "E", "ESE", "SE", "SSE",
              "S", "SSW", "SW", "WSW", "W", "WNW", "NW", "NNW")
COMPASS_DEG = {label: i * 22.5 for i, label in enumerate(_COMPASS16)}
_COMPASS8 = _COMPASS16[::2]

DEFAULT_ELEVATION_M = 3.0


@dataclass(frozen=True)
class SurgeKey:
    basin: str
    category: int
    direction: str
    speed_mph: float
    tide: str = "mean"

    def __post_init__(self):
        if self.direction not in COMPASS_DEG:
            raise ValueError(f"unknown compass direction {self.direction!r}")
        if self.tide not in TIDES:
            raise ValueError(f"unknown tide {self.tide!r}; expected one of {TIDES}")


@dataclass(frozen=True, eq=False)
class SurgeGrid:
    """Maximum water depth (m) at scattered grid cells for one scenario."""

    key: SurgeKey
    lat: np.ndarray
    lon: np.ndarray
    depth: np.ndarray

    def __post_init__(self):
        if self.depth.size == 0:
            raise ValidationError(f"surge grid {self.key} has no cells")
        if not (np.all(np.isfinite(self.depth)) and np.all(self.depth >= 0)):
            raise ValidationError(f"surge grid {self.key} has negative or non-finite depth")

    @property
    def cells(self) -> list:
        return [(GeoPoint(a, b), float(d)) for a, b, d in zip(self.lat, self.lon, self.depth)]

    @property
    def max_depth(self) -> float:
        return float(self.depth.max())


@dataclass(frozen=True)
class Inundation:
    substation_id: str
    depth: float


@dataclass(frozen=True, eq=False)
class Basin:
    """Named coastal basin with a (lat, lon) boundary ring."""

    name: str
    ring: tuple
    polygon: object = field(init=False, repr=False)

    def __post_init__(self):
        if len(self.ring) < 3:
            raise ValueError(f"basin {self.name} polygon needs >= 3 vertices")
        poly = shapely.Polygon([(lon, lat) for lat, lon in self.ring])
        object.__setattr__(self, "polygon", poly)

    def contains(self, p: GeoPoint) -> bool:
        return bool(self.polygon.covers(shapely.Point(p.lon, p.lat)))


def parse_surge_grids(source) -> list:
    """Read the surge CSV and group cells into one :class:`SurgeGrid` per key.

    A row with blank lat/lon/depth declares a key without adding a cell;
    a key that ends up with no cells is rejected.
    """
    if isinstance(source, (str, Path)):
        with open(source, newline="", encoding="utf-8") as fh:
            return parse_surge_grids(fh)
    reader = csv.reader(source)
    try:
        header = [h.strip() for h in next(reader)]
    except StopIteration:
        return []
    if tuple(header) != SURGE_COLUMNS:
        raise ParseError(f"surge header must be {','.join(SURGE_COLUMNS)}, got {','.join(header)}")

    cells = {}
    problems = []
    for row in reader:
        lineno = reader.line_num
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != len(SURGE_COLUMNS):
            raise ParseError(f"line {lineno}: expected {len(SURGE_COLUMNS)} fields, got {len(row)}")
        basin, cat, direction, speed, tide, lat, lon, depth, unit = (c.strip() for c in row)
        if tide not in TIDES:
            raise ParseError(f"line {lineno}: unknown tide label {tide!r}")
        if unit not in ("ft", "m"):
            raise ParseError(f"line {lineno}: unknown depth unit {unit!r}")
        try:
            key = SurgeKey(basin, int(cat), direction.upper(), float(speed), tide)
        except ValueError as exc:
            raise ParseError(f"line {lineno}: {exc}") from None
        if key.category < 1:
            raise ParseError(f"line {lineno}: surge scenarios exist only for category >= 1")
        bucket = cells.setdefault(key, [])
        if lat == "" and lon == "" and depth == "":
            continue
        try:
            p = GeoPoint(float(lat), float(lon))
            d = float(depth)
        except ValueError as exc:
            raise ParseError(f"line {lineno}: {exc}") from None
        if not math.isfinite(d) or d < 0:
            problems.append(f"line {lineno}: depth {depth}")
            continue
        bucket.append((p.lat, p.lon, d * FEET_TO_M if unit == "ft" else d))
    if problems:
        raise ValidationError("negative or non-finite surge depth", problems)

    grids = []
    for key, rows in cells.items():
        if not rows:
            raise ValidationError(f"surge scenario {key} has no cells")
        arr = np.array(rows, float)
        grids.append(SurgeGrid(key, arr[:, 0], arr[:, 1], arr[:, 2]))
    return grids


def _angular_gap(a: str, b: str) -> float:
    d = abs(COMPASS_DEG[a] - COMPASS_DEG[b]) % 360.0
    return min(d, 360.0 - d)


def select_meow(grids: Sequence[SurgeGrid], query: SurgeKey) -> SurgeGrid:
    """Grid for ``query``: exact basin/category/tide, then nearest speed, then direction."""
    if not grids:
        raise NotFoundError("no surge grids loaded")
    pool = [g for g in grids if (g.key.basin, g.key.category, g.key.tide)
            == (query.basin, query.category, query.tide)]
    if not pool:
        raise NotFoundError(f"no surge grid for basin {query.basin}, category {query.category}, "
                            f"{query.tide} tide")
    return min(pool, key=lambda g: (abs(g.key.speed_mph - query.speed_mph),
                                    _angular_gap(g.key.direction, query.direction),
                                    g.key.direction, g.key.speed_mph))


def inundation_at(sub, grid: SurgeGrid, radius_km: float = HALF_MILE_KM) -> Inundation:
    """Water depth above the pad of ``sub`` (anything with id, location, elevation_m)."""
    d = haversine_arrays(sub.location.lat, sub.location.lon, grid.lat, grid.lon)
    near = grid.depth[d <= radius_km]
    top = float(near.max()) if near.size else 0.0
    return Inundation(sub.id, max(0.0, top - sub.elevation_m))


def quantize_direction(bearing_deg: float) -> str:
    """Nearest of the eight principal compass points."""
    return _COMPASS8[int(((bearing_deg % 360.0) + 22.5) // 45.0) % 8]


def storm_motion(track: HurricaneTrack, index: int, window_h: float = 6.0):
    """Forward speed (mph) and heading (8-point label) around ``track.points[index]``.

    Uses the eye displacement between the earliest and latest points within
    ``window_h / 2`` hours either side; one-sided at the ends of the track.
    """
    pts = track.points
    t0 = pts[index].timestamp
    half = window_h * 1800.0
    inside = [i for i, p in enumerate(pts) if abs((p.timestamp - t0).total_seconds()) <= half]
    i, j = min(inside), max(inside)
    if i == j:
        i, j = (index - 1, index) if index > 0 else (index, index + 1)
    a, b = pts[i], pts[j]
    hours = (b.timestamp - a.timestamp).total_seconds() / 3600.0
    speed = haversine_km(a.eye, b.eye) / hours * KM_PER_H_TO_MPH
    heading = quantize_direction(initial_bearing_deg(a.eye, b.eye)) if a.eye != b.eye else "N"
    return speed, heading


def surge_key_for_track(track: HurricaneTrack, landfall_index: int, basin: str,
                        tide: str = "mean") -> Optional[SurgeKey]:
    """Scenario key a storm selects in ``basin``; ``None`` below category 1."""
    category = saffir_simpson_category(track.points[landfall_index].v_max)
    if category < 1:
        return None
    speed, heading = storm_motion(track, landfall_index)
    return SurgeKey(basin, category, heading, speed, tide)


def assign_basin(point: GeoPoint, basins: Sequence[Basin]) -> Optional[Basin]:
    """First basin whose polygon covers ``point``, if any."""
    for b in basins:
        if b.contains(point):
            return b
    return None
