"""Transmission grid case: buses, branches, substations and the county map.

The on-disk format is a JSON object::

    {"base_mva": 100.0,
     "buses":       [{"id", "substation_id", "zip", "load_mw", "gen_capacity_mw", "priority"?}],
     "branches":    [{"id", "from_bus", "to_bus", "reactance_pu", "rating_mw",
                      "voltage_kv", "kind"?, "geometry"?: [[lat, lon], ...]}],
     "substations": [{"id", "location": {"lat", "lon"}, "elevation_m"?, "bus_ids"}],
     "county_map":  [{"zip", "city", "county_fips", "population_share"}]}

``kind`` is ``"line"`` (default) or ``"transformer"``; only lines carry a
wind fragility. Missing geometry means the straight segment between the two
substations.
"""

import json
import logging
import math
from collections import defaultdict
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Optional

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from .errors import NotFoundError, ValidationError
from .geo import GeoPoint, Polyline, sample_polyline
from .surge import DEFAULT_ELEVATION_M

log = logging.getLogger(__name__)

VOLTAGE_CLASSES_KV = (115.0, 161.0, 230.0, 500.0)
BRANCH_KINDS = ("line", "transformer")


@dataclass(frozen=True)
class Bus:
    id: int
    substation_id: str
    zip: str
    load_mw: float
    gen_capacity_mw: float = 0.0
    priority: Optional[float] = None


@dataclass(frozen=True)
class Branch:
    id: int
    from_bus: int
    to_bus: int
    reactance_pu: float
    rating_mw: float
    voltage_kv: float
    kind: str = "line"
    geometry: Optional[Polyline] = None


@dataclass(frozen=True)
class Substation:
    id: str
    location: GeoPoint
    elevation_m: float = DEFAULT_ELEVATION_M
    bus_ids: tuple = ()


@dataclass(frozen=True)
class CountyMapRow:
    zip: str
    city: str
    county_fips: str
    population_share: float


@dataclass(frozen=True, eq=False)
class CaseArrays:
    load: np.ndarray
    capacity: np.ndarray
    priority: Optional[np.ndarray]
    bus_ids: np.ndarray
    from_idx: np.ndarray
    to_idx: np.ndarray
    reactance: np.ndarray
    rating: np.ndarray


@dataclass(eq=False)
class GridCase:
    base_mva: float
    buses: tuple
    branches: tuple
    substations: tuple
    county_map: tuple
    bus_index: dict = field(init=False, repr=False)
    substation_index: dict = field(init=False, repr=False)
    branch_index: dict = field(init=False, repr=False)

    def __post_init__(self):
        self.buses = tuple(self.buses)
        self.branches = tuple(self.branches)
        self.substations = tuple(self.substations)
        self.county_map = tuple(self.county_map)
        self.bus_index = {b.id: i for i, b in enumerate(self.buses)}
        self.branch_index = {br.id: i for i, br in enumerate(self.branches)}
        self.substation_index = {s.id: i for i, s in enumerate(self.substations)}

    def __eq__(self, other):
        if not isinstance(other, GridCase):
            return NotImplemented
        return (self.base_mva, self.buses, self.branches, self.substations, self.county_map) == \
            (other.base_mva, other.buses, other.branches, other.substations, other.county_map)

    @cached_property
    def arrays(self) -> "CaseArrays":
        """Bus and branch data as index-aligned numpy arrays."""
        prio = [b.priority for b in self.buses]
        return CaseArrays(
            load=np.array([b.load_mw for b in self.buses], float),
            capacity=np.array([b.gen_capacity_mw for b in self.buses], float),
            priority=None if all(p is None for p in prio)
            else np.array([0.0 if p is None else p for p in prio]),
            bus_ids=np.array([b.id for b in self.buses], int),
            from_idx=np.array([self.bus_index[br.from_bus] for br in self.branches], int),
            to_idx=np.array([self.bus_index[br.to_bus] for br in self.branches], int),
            reactance=np.array([br.reactance_pu for br in self.branches], float),
            rating=np.array([br.rating_mw for br in self.branches], float),
        )

    @property
    def total_load_mw(self) -> float:
        return math.fsum(b.load_mw for b in self.buses)

    @property
    def total_capacity_mw(self) -> float:
        return math.fsum(b.gen_capacity_mw for b in self.buses)

    @property
    def lines(self) -> list:
        return [br for br in self.branches if br.kind == "line"]

    def line_corridors(self) -> int:
        """Distinct (from_bus, to_bus) pairs among lines; parallel circuits count once."""
        return len({(br.from_bus, br.to_bus) for br in self.lines})

    def bus(self, bus_id: int) -> Bus:
        return self.buses[self.bus_index[bus_id]]

    def substation(self, sub_id: str) -> Substation:
        try:
            return self.substations[self.substation_index[sub_id]]
        except KeyError:
            raise NotFoundError(f"unknown substation {sub_id!r}") from None

    def substation_of_bus(self, bus_id: int) -> Substation:
        return self.substation(self.bus(bus_id).substation_id)

    def branch_geometry(self, branch: Branch) -> Optional[Polyline]:
        """Routed geometry, or the straight segment between the end substations.

        ``None`` when both ends sit at the same location (e.g. a transformer).
        """
        if branch.geometry is not None:
            return branch.geometry
        a = self.substation_of_bus(branch.from_bus).location
        b = self.substation_of_bus(branch.to_bus).location
        return None if a == b else Polyline((a, b))

    def branch_sample_points(self, branch: Branch, spacing_km: float):
        """(lat, lon) arrays of points sampled along the branch."""
        line = self.branch_geometry(branch)
        if line is None:
            p = self.substation_of_bus(branch.from_bus).location
            return np.array([p.lat]), np.array([p.lon])
        pts = sample_polyline(line, spacing_km)
        return np.array([p.lat for p in pts]), np.array([p.lon for p in pts])

    def city_county_shares(self) -> dict:
        """city -> {county_fips: population share}."""
        shares = defaultdict(dict)
        for row in self.county_map:
            shares[row.city][row.county_fips] = row.population_share
        return dict(shares)

    def zip_city(self) -> dict:
        return {row.zip: row.city for row in self.county_map}

    def counties(self) -> list:
        return sorted({row.county_fips for row in self.county_map})


def branches_of_substation(case: GridCase, substation_id: str) -> list:
    """Every branch with at least one end bus inside the substation (listed once)."""
    sub = case.substation(substation_id)
    members = set(sub.bus_ids)
    return [br for br in case.branches if br.from_bus in members or br.to_bus in members]


def validate_case(case: GridCase, voltage_classes=VOLTAGE_CLASSES_KV) -> list:
    """All invariant violations of ``case`` as human-readable strings."""
    problems = []
    if not case.base_mva > 0:
        problems.append(f"base_mva must be positive, got {case.base_mva}")

    def dupes(ids, what):
        seen, dup = set(), set()
        for i in ids:
            (dup if i in seen else seen).add(i)
        problems.extend(f"duplicate {what} id {i}" for i in sorted(dup, key=str))

    dupes([b.id for b in case.buses], "bus")
    dupes([br.id for br in case.branches], "branch")
    dupes([s.id for s in case.substations], "substation")

    classes = set(float(v) for v in voltage_classes)
    for b in case.buses:
        if not (math.isfinite(b.load_mw) and b.load_mw >= 0):
            problems.append(f"bus {b.id}: load_mw {b.load_mw} must be finite and >= 0")
        if not (math.isfinite(b.gen_capacity_mw) and b.gen_capacity_mw >= 0):
            problems.append(f"bus {b.id}: gen_capacity_mw {b.gen_capacity_mw} must be finite and >= 0")
        if b.substation_id not in case.substation_index:
            problems.append(f"bus {b.id}: unknown substation {b.substation_id!r}")

    for br in case.branches:
        for end in (br.from_bus, br.to_bus):
            if end not in case.bus_index:
                problems.append(f"branch {br.id}: references absent bus {end}")
        if br.from_bus == br.to_bus:
            problems.append(f"branch {br.id}: from_bus equals to_bus ({br.from_bus})")
        if not br.reactance_pu > 0:
            problems.append(f"branch {br.id}: reactance_pu {br.reactance_pu} must be > 0")
        if not br.rating_mw > 0:
            problems.append(f"branch {br.id}: rating_mw {br.rating_mw} must be > 0")
        if float(br.voltage_kv) not in classes:
            problems.append(f"branch {br.id}: voltage {br.voltage_kv} kV not in {sorted(classes)}")
        if br.kind not in BRANCH_KINDS:
            problems.append(f"branch {br.id}: unknown kind {br.kind!r}")

    owner = {}
    for s in case.substations:
        if not s.bus_ids:
            problems.append(f"substation {s.id}: no buses")
        if not s.elevation_m >= 0:
            problems.append(f"substation {s.id}: elevation_m {s.elevation_m} must be >= 0")
        for bid in s.bus_ids:
            if bid in owner:
                problems.append(f"bus {bid}: listed by substations {owner[bid]} and {s.id}")
            owner[bid] = s.id
    for b in case.buses:
        if b.substation_id in case.substation_index and owner.get(b.id) != b.substation_id:
            problems.append(f"bus {b.id}: not listed in bus_ids of substation {b.substation_id}")
    for bid in owner:
        if bid not in case.bus_index:
            problems.append(f"substation {owner[bid]}: lists absent bus {bid}")

    zip_city = {}
    for row in case.county_map:
        if not 0.0 <= row.population_share <= 1.0:
            problems.append(f"county_map zip {row.zip}: share {row.population_share} outside [0, 1]")
        prev = zip_city.setdefault(row.zip, row.city)
        if prev != row.city:
            problems.append(f"county_map zip {row.zip}: mapped to cities {prev} and {row.city}")
    shares = defaultdict(dict)
    for row in case.county_map:
        old = shares[row.city].get(row.county_fips)
        if old is not None and old != row.population_share:
            problems.append(f"county_map city {row.city}: conflicting shares for county {row.county_fips}")
        shares[row.city][row.county_fips] = row.population_share
    for city, per_county in sorted(shares.items()):
        total = math.fsum(per_county.values())
        if abs(total - 1.0) > 1e-9:
            problems.append(f"county_map city {city}: county shares sum to {total!r}, not 1")
    unmapped = sorted({b.zip for b in case.buses} - set(zip_city))
    if unmapped:
        problems.append("bus zips without county mapping: " + ", ".join(unmapped))
    return problems


def check_connected(case: GridCase) -> int:
    """Number of connected components of the in-service bus graph."""
    n = len(case.buses)
    if n == 0:
        return 0
    rows = [case.bus_index[br.from_bus] for br in case.branches]
    cols = [case.bus_index[br.to_bus] for br in case.branches]
    adj = coo_matrix((np.ones(len(rows)), (rows, cols)), shape=(n, n))
    count, _ = connected_components(adj, directed=False)
    return int(count)


# -- JSON -----------------------------------------------------------------------

def _bus_from(d):
    return Bus(int(d["id"]), str(d["substation_id"]), str(d["zip"]), float(d["load_mw"]),
               float(d.get("gen_capacity_mw", 0.0)),
               None if d.get("priority") is None else float(d["priority"]))


def _branch_from(d):
    geom = d.get("geometry")
    if geom is not None:
        geom = Polyline(tuple(GeoPoint(float(a), float(b)) for a, b in geom))
    return Branch(int(d["id"]), int(d["from_bus"]), int(d["to_bus"]), float(d["reactance_pu"]),
                  float(d["rating_mw"]), float(d["voltage_kv"]), str(d.get("kind", "line")), geom)


def _substation_from(d):
    loc = d["location"]
    return Substation(str(d["id"]), GeoPoint(float(loc["lat"]), float(loc["lon"])),
                      float(d.get("elevation_m", DEFAULT_ELEVATION_M)),
                      tuple(int(b) for b in d["bus_ids"]))


def _county_row_from(d):
    return CountyMapRow(str(d["zip"]), str(d["city"]), str(d["county_fips"]),
                        float(d["population_share"]))


def case_from_dict(data: dict, voltage_classes=VOLTAGE_CLASSES_KV, strict: bool = True) -> GridCase:
    """Build and validate a :class:`GridCase` from its JSON object."""
    problems = []
    parts = {}
    for key, ctor in (("buses", _bus_from), ("branches", _branch_from),
                      ("substations", _substation_from), ("county_map", _county_row_from)):
        items = []
        for i, d in enumerate(data.get(key, [])):
            try:
                items.append(ctor(d))
            except (KeyError, TypeError, ValueError) as exc:
                problems.append(f"{key}[{i}]: malformed record ({exc.__class__.__name__}: {exc})")
        parts[key] = items
    if "base_mva" not in data:
        problems.append("missing base_mva")
    if problems:
        raise ValidationError("grid case is malformed", problems)
    case = GridCase(float(data["base_mva"]), parts["buses"], parts["branches"],
                    parts["substations"], parts["county_map"])
    problems = validate_case(case, voltage_classes)
    if problems and strict:
        raise ValidationError("grid case failed validation", problems)
    n_comp = check_connected(case) if not problems else 1
    if n_comp > 1:
        log.warning("grid case has %d disconnected components as delivered", n_comp)
    return case


def parse_grid_case(source, voltage_classes=VOLTAGE_CLASSES_KV) -> GridCase:
    """Load a grid case JSON file (path or open stream)."""
    if isinstance(source, (str, Path)):
        with open(source, encoding="utf-8") as fh:
            return parse_grid_case(fh, voltage_classes)
    try:
        data = json.load(source)
    except json.JSONDecodeError as exc:
        raise ValidationError(f"grid case is not valid JSON: {exc}") from None
    return case_from_dict(data, voltage_classes)


def case_to_dict(case: GridCase) -> dict:
    def bus(b):
        d = {"id": b.id, "substation_id": b.substation_id, "zip": b.zip,
             "load_mw": b.load_mw, "gen_capacity_mw": b.gen_capacity_mw}
        if b.priority is not None:
            d["priority"] = b.priority
        return d

    def branch(br):
        d = {"id": br.id, "from_bus": br.from_bus, "to_bus": br.to_bus,
             "reactance_pu": br.reactance_pu, "rating_mw": br.rating_mw,
             "voltage_kv": br.voltage_kv, "kind": br.kind}
        if br.geometry is not None:
            d["geometry"] = [[p.lat, p.lon] for p in br.geometry.vertices]
        return d

    return {
        "base_mva": case.base_mva,
        "buses": [bus(b) for b in case.buses],
        "branches": [branch(br) for br in case.branches],
        "substations": [{"id": s.id, "location": {"lat": s.location.lat, "lon": s.location.lon},
                         "elevation_m": s.elevation_m, "bus_ids": list(s.bus_ids)}
                        for s in case.substations],
        "county_map": [{"zip": r.zip, "city": r.city, "county_fips": r.county_fips,
                        "population_share": r.population_share} for r in case.county_map],
    }


def write_grid_case(case: GridCase, dest) -> None:
    if isinstance(dest, (str, Path)):
        with open(dest, "w", encoding="utf-8") as fh:
            return write_grid_case(case, fh)
    json.dump(case_to_dict(case), dest, indent=1)
    dest.write("\n")
