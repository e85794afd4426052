"""Run configuration (YAML).

Example::

    paths:
      tracks: tracks.csv
      surge: surge.csv              # optional: wind-only study without it
      grid_case: grid.json
      svi: svi.csv
      county_geometry: counties.geojson   # optional: no GeoJSON without it
    output_dir: out
    boundary: {min_lat: 25.5, max_lat: 31.0, min_lon: -98.0, max_lon: -93.0}
    landfall: {side: north}         # or {polygon: [[lat, lon], ...]}
    basins:
      - name: Galveston
        polygon: [[29.0, -95.5], [29.9, -95.5], [29.9, -94.0], [29.0, -94.0]]
    wind_profile: {beta: 0.1, eye_calm_fraction: 0.0}
    branch_spacing_km: 1.0
    fragility:
      wind_ms: {115: [25, 55], 161: [30, 60], 230: [35, 65], 500: [45, 75]}
      flood: {a_m: 3.0, b: 3.0}
    surge:
      tide: mean
      activation_window_h: 6
      overrides: {STORM01: {category: 1, direction: N, speed_mph: 10}}
    monte_carlo: {n_samples: 1000, base_seed: 0, workers: 1}
    imputation: {method: mode, seed: 0}
    county_id_property: county_fips

Relative paths resolve against the configuration file's directory.
"""

import hashlib
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional

import yaml

from .errors import ConfigError
from .fragility import DEFAULT_WIND_THRESHOLDS, FloodFragilityParams, WindFragilityTable
from .geo import BoundingBox
from .hurricane import WindProfile
from .scenario import DEFAULT_ACTIVATION_WINDOW_H, landward_half
from .surge import Basin, SurgeKey

REQUIRED_PATHS = ("tracks", "grid_case", "svi")
OPTIONAL_PATHS = ("surge", "county_geometry")


@dataclass
class RunConfig:
    source: Path
    digest: str
    paths: dict
    output_dir: Path
    boundary: BoundingBox
    land: object
    basins: tuple = ()
    profile: WindProfile = field(default_factory=WindProfile)
    spacing_km: float = 1.0
    wind_table: WindFragilityTable = field(default_factory=WindFragilityTable)
    flood: Optional[FloodFragilityParams] = None
    tide: str = "mean"
    activation_window_h: float = DEFAULT_ACTIVATION_WINDOW_H
    surge_overrides: dict = field(default_factory=dict)
    n_samples: int = 1000
    base_seed: int = 0
    workers: int = 1
    imputation_method: str = "mode"
    imputation_seed: int = 0
    county_id_property: str = "county_fips"

    def path(self, name: str) -> Optional[Path]:
        return self.paths.get(name)

    def with_overrides(self, *, seed=None, samples=None, out=None, workers=None) -> "RunConfig":
        cfg = self
        if seed is not None:
            cfg = replace(cfg, base_seed=int(seed))
        if samples is not None:
            if int(samples) < 1:
                raise ConfigError("--samples must be >= 1")
            cfg = replace(cfg, n_samples=int(samples))
        if out is not None:
            cfg = replace(cfg, output_dir=Path(out))
        if workers is not None:
            if int(workers) < 1:
                raise ConfigError("--workers must be >= 1")
            cfg = replace(cfg, workers=int(workers))
        return cfg

    def missing_paths(self) -> list:
        return [f"{k}: {p}" for k, p in self.paths.items() if not p.exists()]


def _box(d, what) -> BoundingBox:
    try:
        return BoundingBox(float(d["min_lat"]), float(d["max_lat"]),
                           float(d["min_lon"]), float(d["max_lon"]))
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"{what}: need min_lat/max_lat/min_lon/max_lon ({exc})") from None


def _ring(points, what) -> tuple:
    try:
        ring = tuple((float(a), float(b)) for a, b in points)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{what}: polygon must be a list of [lat, lon] pairs ({exc})") from None
    if len(ring) < 3:
        raise ConfigError(f"{what}: polygon needs at least 3 vertices")
    return ring


def _surge_key(d, basin: str, default_tide: str) -> SurgeKey:
    try:
        return SurgeKey(basin, int(d["category"]), str(d["direction"]).upper(),
                        float(d["speed_mph"]), str(d.get("tide", default_tide)))
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"surge override: {exc}") from None


def load_config(path, allow_default_fragility: bool = False) -> RunConfig:
    """Parse and check a YAML run configuration.

    Raises :class:`ConfigError` when the flood fragility constants are absent
    and ``allow_default_fragility`` is false.
    """
    path = Path(path)
    try:
        raw_bytes = path.read_bytes()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    try:
        raw = yaml.safe_load(raw_bytes) or {}
    except yaml.YAMLError as exc:
        raise ConfigError(f"config {path} is not valid YAML: {exc}") from None
    if not isinstance(raw, dict):
        raise ConfigError(f"config {path} must be a mapping")
    base = path.parent

    paths_raw = raw.get("paths") or {}
    paths = {}
    for key in REQUIRED_PATHS:
        if key not in paths_raw:
            raise ConfigError(f"paths.{key} is required")
    for key in REQUIRED_PATHS + OPTIONAL_PATHS:
        if paths_raw.get(key):
            paths[key] = (base / paths_raw[key]).resolve()
    unknown = set(paths_raw) - set(REQUIRED_PATHS + OPTIONAL_PATHS)
    if unknown:
        raise ConfigError(f"unknown paths entries: {sorted(unknown)}")

    if "boundary" not in raw:
        raise ConfigError("boundary is required")
    boundary = _box(raw["boundary"], "boundary")

    land_raw = raw.get("landfall") or {}
    if "polygon" in land_raw:
        land = Basin("land", _ring(land_raw["polygon"], "landfall"))
    else:
        try:
            land = landward_half(boundary, land_raw.get("side", "north"))
        except ValueError as exc:
            raise ConfigError(f"landfall: {exc}") from None

    basins = []
    for i, b in enumerate(raw.get("basins") or []):
        if "name" not in b:
            raise ConfigError(f"basins[{i}]: name is required")
        basins.append(Basin(str(b["name"]), _ring(b.get("polygon", []), f"basins[{i}]")))

    wp = raw.get("wind_profile") or {}
    try:
        profile = WindProfile(float(wp.get("beta", 0.1)), float(wp.get("eye_calm_fraction", 0.0)))
    except ValueError as exc:
        raise ConfigError(f"wind_profile: {exc}") from None

    frag = raw.get("fragility") or {}
    wind_raw = frag.get("wind_ms")
    if wind_raw is None:
        thresholds = dict(DEFAULT_WIND_THRESHOLDS)
    else:
        thresholds = {}
        for kv, pair in wind_raw.items():
            if isinstance(pair, dict):
                pair = (pair.get("v_cri"), pair.get("v_col"))
            try:
                thresholds[float(kv)] = (float(pair[0]), float(pair[1]))
            except (TypeError, ValueError, IndexError):
                raise ConfigError(f"fragility.wind_ms.{kv}: expected [v_cri, v_col]") from None
    wind_table = WindFragilityTable(thresholds)

    flood_raw = frag.get("flood")
    if flood_raw is None:
        if not allow_default_fragility:
            raise ConfigError("fragility.flood (a_m, b) is not set; the flood fragility constants "
                              "must be supplied for a calibrated study, or pass "
                              "--allow-default-fragility to use a_m=3.0, b=3.0")
        flood = FloodFragilityParams()
    else:
        try:
            flood = FloodFragilityParams(float(flood_raw["a_m"]), float(flood_raw["b"]))
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"fragility.flood: need a_m and b ({exc})") from None

    surge_raw = raw.get("surge") or {}
    tide = str(surge_raw.get("tide", "mean"))
    if tide not in ("mean", "high"):
        raise ConfigError(f"surge.tide must be mean or high, got {tide!r}")
    overrides = {}
    basin_names = [b.name for b in basins]
    for storm_id, entry in (surge_raw.get("overrides") or {}).items():
        overrides[str(storm_id)] = {name: _surge_key(entry, name, tide) for name in basin_names}

    mc = raw.get("monte_carlo") or {}
    imp = raw.get("imputation") or {}
    cfg = RunConfig(
        source=path.resolve(),
        digest=hashlib.sha256(raw_bytes).hexdigest(),
        paths=paths,
        output_dir=(base / raw.get("output_dir", "out")).resolve(),
        boundary=boundary,
        land=land,
        basins=tuple(basins),
        profile=profile,
        spacing_km=float(raw.get("branch_spacing_km", 1.0)),
        wind_table=wind_table,
        flood=flood,
        tide=tide,
        activation_window_h=float(surge_raw.get("activation_window_h", DEFAULT_ACTIVATION_WINDOW_H)),
        surge_overrides=overrides,
        n_samples=int(mc.get("n_samples", 1000)),
        base_seed=int(mc.get("base_seed", 0)),
        workers=int(mc.get("workers", 1)),
        imputation_method=str(imp.get("method", "mode")),
        imputation_seed=int(imp.get("seed", 0)),
        county_id_property=str(raw.get("county_id_property", "county_fips")),
    )
    if cfg.spacing_km <= 0:
        raise ConfigError("branch_spacing_km must be positive")
    if cfg.n_samples < 1:
        raise ConfigError("monte_carlo.n_samples must be >= 1")
    if cfg.workers < 1:
        raise ConfigError("monte_carlo.workers must be >= 1")
    if cfg.activation_window_h <= 0:
        raise ConfigError("surge.activation_window_h must be positive")
    return cfg
