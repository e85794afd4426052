"""Hurricane tracks and the parametric radial wind field.

Tracks are read from a flat CSV (one row per storm and timestamp). Each
recorded point is one simulation time step. The wind field around the eye
is piecewise linear in distance::

    r = 0          -> eye_calm_fraction * v_max
    r = r_vmax     -> v_max
    r = r_s        -> beta * v_max
    r > r_s        -> 0
"""

import csv
import io
import logging
import math
from dataclasses import dataclass, replace
from datetime import datetime, timedelta, timezone
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
from scipy import stats

from .errors import InvalidStateError, ParseError, ValidationError
from .geo import BoundingBox, GeoPoint, Polyline, haversine_arrays, haversine_km, sample_polyline

log = logging.getLogger(__name__)

TRACK_COLUMNS = ("storm_id", "name", "iso8601_time", "lat", "lon",
                 "vmax_ms", "rvmax_km", "rs_km", "category")

KNOT_MS = 0.514444
# Lower bounds (knots) of categories 0..5 on the extended Saffir-Simpson scale.
_SAFFIR_SIMPSON_KT = (34, 64, 83, 96, 113, 137)

NOMINAL_CADENCE = timedelta(hours=3)


def saffir_simpson_category(v_max: float) -> int:
    """Category -1..5 for a 1-minute sustained wind in m/s."""
    kt = v_max / KNOT_MS
    cat = -1
    for c, lower in enumerate(_SAFFIR_SIMPSON_KT):
        if kt >= lower:
            cat = c
    return cat


@dataclass(frozen=True)
class TrackPoint:
    timestamp: datetime
    eye: GeoPoint
    v_max: float
    r_vmax: Optional[float]
    r_s: Optional[float]
    category: int

    def __post_init__(self):
        if not (math.isfinite(self.v_max) and self.v_max > 0):
            raise ValueError(f"v_max must be positive, got {self.v_max}")
        for name in ("r_vmax", "r_s"):
            v = getattr(self, name)
            if v is not None and not (math.isfinite(v) and v > 0):
                raise ValueError(f"{name} must be positive when present, got {v}")
        if self.r_vmax is not None and self.r_s is not None and not self.r_vmax < self.r_s:
            raise ValueError(f"r_vmax {self.r_vmax} must be below r_s {self.r_s}")
        if not -1 <= self.category <= 5:
            raise ValueError(f"category {self.category} outside [-1, 5]")

    @property
    def has_radii(self) -> bool:
        return self.r_vmax is not None and self.r_s is not None


@dataclass(frozen=True)
class HurricaneTrack:
    storm_id: str
    name: str
    points: tuple

    def __post_init__(self):
        object.__setattr__(self, "points", tuple(self.points))
        if len(self.points) < 2:
            raise ValidationError(f"storm {self.storm_id} has fewer than 2 track points")
        times = [p.timestamp for p in self.points]
        if any(b <= a for a, b in zip(times, times[1:])):
            raise ValidationError(f"storm {self.storm_id}: timestamps not strictly increasing")

    @property
    def times(self) -> list:
        return [p.timestamp for p in self.points]

    @property
    def max_category(self) -> int:
        return max(p.category for p in self.points)


@dataclass(frozen=True)
class WindProfile:
    beta: float = 0.1
    eye_calm_fraction: float = 0.0

    def __post_init__(self):
        if not 0.0 < self.beta < 1.0:
            raise ValueError(f"beta must lie strictly in (0, 1), got {self.beta}")
        if not 0.0 <= self.eye_calm_fraction < 1.0:
            raise ValueError(f"eye_calm_fraction must lie in [0, 1), got {self.eye_calm_fraction}")


def _parse_time(text: str) -> datetime:
    t = datetime.fromisoformat(text.strip().replace("Z", "+00:00"))
    if t.tzinfo is None:
        t = t.replace(tzinfo=timezone.utc)
    return t.astimezone(timezone.utc)


def _optional_float(text: str) -> Optional[float]:
    text = text.strip()
    return None if text == "" else float(text)


def parse_tracks(source) -> list:
    """Read a track CSV into one :class:`HurricaneTrack` per storm_id.

    ``source`` is a path or an open text stream. Blank radius cells are kept
    as ``None``. Rows of a storm must be in strictly increasing time order.
    """
    if isinstance(source, (str, Path)):
        with open(source, newline="", encoding="utf-8") as fh:
            return parse_tracks(fh)
    text = source.read()
    if not text.strip():
        return []
    reader = csv.reader(io.StringIO(text))
    header = [h.strip() for h in next(reader)]
    if tuple(header) != TRACK_COLUMNS:
        raise ParseError(f"track header must be {','.join(TRACK_COLUMNS)}, got {','.join(header)}")

    rows = {}
    names = {}
    for row in reader:
        lineno = reader.line_num
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != len(TRACK_COLUMNS):
            raise ParseError(f"line {lineno}: expected {len(TRACK_COLUMNS)} fields, got {len(row)}")
        sid, name, ts, lat, lon, vmax, rvmax, rs, cat = (c.strip() for c in row)
        try:
            point = TrackPoint(
                timestamp=_parse_time(ts),
                eye=GeoPoint(float(lat), float(lon)),
                v_max=float(vmax),
                r_vmax=_optional_float(rvmax),
                r_s=_optional_float(rs),
                category=int(cat),
            )
        except ValueError as exc:
            raise ParseError(f"line {lineno}: {exc}") from None
        if not sid:
            raise ParseError(f"line {lineno}: empty storm_id")
        expected = saffir_simpson_category(point.v_max)
        if expected != point.category:
            log.warning("line %d: storm %s category %d disagrees with v_max band (%d)",
                        lineno, sid, point.category, expected)
        pts = rows.setdefault(sid, [])
        if pts and point.timestamp <= pts[-1].timestamp:
            raise ValidationError(f"storm {sid}: non-monotone timestamp at line {lineno}")
        pts.append(point)
        names.setdefault(sid, name)

    tracks = []
    for sid, pts in rows.items():
        if len(pts) < 2:
            raise ValidationError(f"storm {sid} has fewer than 2 track points")
        for a, b in zip(pts, pts[1:]):
            if b.timestamp - a.timestamp != NOMINAL_CADENCE:
                log.warning("storm %s: %s step between %s and %s", sid,
                            b.timestamp - a.timestamp, a.timestamp.isoformat(), b.timestamp.isoformat())
                break
        tracks.append(HurricaneTrack(sid, names[sid], tuple(pts)))
    return tracks


def write_tracks(tracks: Sequence[HurricaneTrack], dest) -> None:
    """Write tracks in the CSV layout read by :func:`parse_tracks`."""
    if isinstance(dest, (str, Path)):
        with open(dest, "w", newline="", encoding="utf-8") as fh:
            return write_tracks(tracks, fh)

    def fmt(v):
        return "" if v is None else repr(float(v))

    w = csv.writer(dest, lineterminator="\n")
    w.writerow(TRACK_COLUMNS)
    for t in tracks:
        for p in t.points:
            w.writerow([t.storm_id, t.name, p.timestamp.strftime("%Y-%m-%dT%H:%M:%SZ"),
                        repr(p.eye.lat), repr(p.eye.lon), repr(p.v_max),
                        fmt(p.r_vmax), fmt(p.r_s), p.category])


# -- imputation ---------------------------------------------------------------

MIN_OBSERVED_RADII = 5
_KDE_GRID = 2001


class _RadiusKDE:
    """Gaussian KDE (Silverman bandwidth) over observed values of one radius."""

    def __init__(self, values: np.ndarray):
        self.values = np.asarray(values, float)
        self.lo = float(self.values.min())
        self.hi = float(self.values.max())
        self.constant = self.hi == self.lo
        self.kde = None if self.constant else stats.gaussian_kde(self.values, bw_method="silverman")

    def mode(self, lower: float = 0.0, upper: float = math.inf) -> float:
        """Density maximiser over the open interval (lower, upper).

        The scan is confined to the observed range when it overlaps the
        interval; otherwise the interval itself is scanned.
        """
        if self.constant and lower < self.lo < upper:
            return self.lo
        a, b = max(lower, self.lo), min(upper, self.hi)
        if not a < b or self.constant:
            # No overlap with the data hull: scan the admissible interval.
            spread = self.kde.factor * self.values.std(ddof=1) if self.kde else abs(self.lo) * 0.1 + 1.0
            a = lower
            b = upper if math.isfinite(upper) else lower + 4.0 * spread
            if self.kde is None:
                # Degenerate data and no overlap: take the admissible point nearest the value.
                return min(max(self.lo, np.nextafter(a, b)), np.nextafter(b, a))
        grid = np.linspace(a, b, _KDE_GRID)
        # keep open-interval semantics for strict constraints
        grid = grid[(grid > lower) & (grid < upper)]
        if grid.size == 0:
            return 0.5 * (a + b)
        return float(grid[np.argmax(self.kde(grid))])

    def sample(self, rng: np.random.Generator, lower: float, upper: float) -> Optional[float]:
        if self.kde is None:
            return self.lo if lower < self.lo < upper else None
        for _ in range(1000):
            v = float(self.kde.resample(1, seed=rng)[0, 0])
            if lower < v < upper and v > 0:
                return v
        return None


def impute_missing_radii(tracks: Sequence[HurricaneTrack], rng_seed: int = 0,
                         method: str = "mode") -> list:
    """Fill missing r_vmax / r_s from kernel density estimates of the observed values.

    With ``method="mode"`` (default) each gap receives the KDE mode within
    the range that keeps r_vmax < r_s, which is deterministic. ``"sample"``
    draws from the KDE with a generator seeded by ``rng_seed``.
    """
    if method not in ("mode", "sample"):
        raise ValueError(f"unknown imputation method {method!r}")
    pts = [p for t in tracks for p in t.points]
    missing_rv = any(p.r_vmax is None for p in pts)
    missing_rs = any(p.r_s is None for p in pts)
    if not (missing_rv or missing_rs):
        return list(tracks)

    obs_rv = np.array([p.r_vmax for p in pts if p.r_vmax is not None])
    obs_rs = np.array([p.r_s for p in pts if p.r_s is not None])
    problems = []
    if missing_rv and obs_rv.size < MIN_OBSERVED_RADII:
        problems.append(f"r_vmax: {obs_rv.size} observed values")
    if missing_rs and obs_rs.size < MIN_OBSERVED_RADII:
        problems.append(f"r_s: {obs_rs.size} observed values")
    if problems:
        raise ValidationError(f"need at least {MIN_OBSERVED_RADII} observed radii to impute", problems)

    kde_rv = _RadiusKDE(obs_rv) if obs_rv.size else None
    kde_rs = _RadiusKDE(obs_rs) if obs_rs.size else None
    rng = np.random.default_rng(rng_seed)

    def pick(kde, lower, upper):
        if method == "sample":
            v = kde.sample(rng, lower, upper)
            if v is not None:
                return v
        return kde.mode(lower, upper)

    out = []
    n_filled = 0
    for t in tracks:
        new_points = []
        for p in t.points:
            rv, rs = p.r_vmax, p.r_s
            if rv is None and rs is None:
                rv = pick(kde_rv, 0.0, math.inf)
                rs = pick(kde_rs, rv, math.inf)
            elif rv is None:
                rv = pick(kde_rv, 0.0, rs)
            elif rs is None:
                rs = pick(kde_rs, rv, math.inf)
            if (rv, rs) != (p.r_vmax, p.r_s):
                n_filled += 1
                p = replace(p, r_vmax=rv, r_s=rs)
            new_points.append(p)
        out.append(replace(t, points=tuple(new_points)))
    log.info("imputed radii at %d track points", n_filled)
    return out


# -- boundary filter -----------------------------------------------------------

def track_touches_box(track: HurricaneTrack, box: BoundingBox) -> bool:
    for p in track.points:
        reach = p.r_s or 0.0
        if box.contains(p.eye) or haversine_km(p.eye, box.nearest_point(p.eye)) <= reach:
            return True
    return False


def filter_by_boundary(tracks: Sequence[HurricaneTrack], box: BoundingBox) -> list:
    """Keep tracks whose wind disk (radius r_s) meets ``box`` at some point.

    A missing r_s counts as zero, so only the eye position is tested.
    """
    return [t for t in tracks if track_touches_box(t, box)]


# -- wind field ------------------------------------------------------------------

_EDGE_RTOL = 1e-12


def radial_wind(r, v_max: float, r_vmax: float, r_s: float, profile: WindProfile):
    """Wind speed (m/s) at distance(s) ``r`` km from the eye."""
    r = np.asarray(r, float)
    c = profile.eye_calm_fraction
    inner = v_max * (c + (1.0 - c) * r / r_vmax)
    outer = v_max * (1.0 - (1.0 - profile.beta) * (r - r_vmax) / (r_s - r_vmax))
    # a point placed on the outer radius comes back from haversine a few ulps long
    edge = r_s * (1.0 + _EDGE_RTOL)
    return np.where(r <= r_vmax, inner, np.where(r <= edge, outer, 0.0))


def _require_radii(tp: TrackPoint):
    if not tp.has_radii:
        raise InvalidStateError(f"track point at {tp.timestamp.isoformat()} has missing radii; impute first")


def wind_at(target: GeoPoint, tp: TrackPoint, profile: WindProfile) -> float:
    _require_radii(tp)
    r = haversine_km(target, tp.eye)
    return float(radial_wind(r, tp.v_max, tp.r_vmax, tp.r_s, profile))


def wind_at_arrays(lat, lon, tp: TrackPoint, profile: WindProfile) -> np.ndarray:
    """Vectorised :func:`wind_at` over coordinate arrays."""
    _require_radii(tp)
    r = haversine_arrays(tp.eye.lat, tp.eye.lon, lat, lon)
    return radial_wind(r, tp.v_max, tp.r_vmax, tp.r_s, profile)


def max_wind_on_branch(line: Polyline, tp: TrackPoint, profile: WindProfile,
                       spacing: float = 1.0) -> float:
    """Highest wind speed over points sampled every ``spacing`` km along ``line``."""
    _require_radii(tp)
    pts = sample_polyline(line, spacing)
    lat = np.array([p.lat for p in pts])
    lon = np.array([p.lon for p in pts])
    return float(wind_at_arrays(lat, lon, tp, profile).max())
