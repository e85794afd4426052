"""Offline conversion of a MATPOWER case (e.g. the synthetic Texas 2000-bus
model) into the grid case JSON format.

MATPOWER files carry no geography. Substations are recovered from bus names
of the form ``"<SUBSTATION NAME> <k>"``; coordinates, zip codes and the
county map come from optional side tables. Without them every substation
gets a placeholder location and its city name stands in for zip and county,
which is enough for ingestion checks but not for a hazard study.
"""

import csv
import gzip
import logging
import re
from collections import defaultdict
from pathlib import Path

import numpy as np

from .grid import Branch, Bus, CountyMapRow, GridCase, Substation, VOLTAGE_CLASSES_KV
from .geo import GeoPoint
from .errors import ParseError, ValidationError
from .surge import DEFAULT_ELEVATION_M

log = logging.getLogger(__name__)

PLACEHOLDER_LOCATION = GeoPoint(31.0, -99.0)
UNLIMITED_RATING_MW = 1e5

_BUS, _PD, _BASE_KV = 0, 2, 9
_GEN_BUS, _PMAX = 0, 8
_F, _T, _X, _RATE_A, _RATIO, _STATUS = 0, 1, 3, 5, 8, 10


def _read_text(path: Path) -> str:
    opener = gzip.open if path.suffix == ".gz" else open
    with opener(path, "rt", encoding="utf-8", errors="replace") as fh:
        return fh.read()


def _matrix(text: str, name: str) -> np.ndarray:
    m = re.search(r"mpc\." + name + r"\s*=\s*\[(.*?)\];", text, re.S)
    if m is None:
        raise ParseError(f"MATPOWER case has no mpc.{name} block")
    rows = []
    for line in m.group(1).splitlines():
        line = line.split("%")[0].strip().rstrip(";").strip()
        if line:
            rows.append([float(x) for x in line.split()])
    return np.array(rows)


def _cell(text: str, name: str) -> list:
    m = re.search(r"mpc\." + name + r"\s*=\s*\{(.*?)\};", text, re.S)
    if m is None:
        return []
    return [line.strip().rstrip(";").strip().strip("'") for line in m.group(1).splitlines()
            if line.strip()]


def substation_name(bus_name: str) -> str:
    """``'ODESSA 2 0'`` -> ``'ODESSA 2'``; names without a trailing index stay whole."""
    head, _, tail = bus_name.rpartition(" ")
    return head if head and tail.isdigit() else bus_name


def city_name(sub_name: str) -> str:
    """``'ODESSA 2'`` -> ``'ODESSA'``."""
    head, _, tail = sub_name.rpartition(" ")
    return head if head and tail.isdigit() else sub_name


def _read_table(path) -> list:
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def convert_matpower(path, substation_geo=None, county_map=None,
                     voltage_classes=VOLTAGE_CLASSES_KV) -> GridCase:
    """Convert a MATPOWER ``.m`` (optionally gzipped) file to a :class:`GridCase`.

    ``substation_geo``: CSV ``substation,lat,lon,zip[,elevation_m]``.
    ``county_map``: CSV ``zip,city,county_fips,population_share``.
    Branches with a tap ratio or joining different voltages become
    transformers; their voltage class is the higher side. Generator
    capacity is the summed Pmax at the bus, regardless of commitment status.
    """
    text = _read_text(Path(path))
    base_mva = float(re.search(r"mpc\.baseMVA\s*=\s*([\d.eE+-]+)", text).group(1))
    bus = _matrix(text, "bus")
    gen = _matrix(text, "gen")
    branch = _matrix(text, "branch")
    names = _cell(text, "bus_name")
    if len(names) != len(bus):
        raise ParseError("MATPOWER case needs mpc.bus_name to recover substations")

    cap = defaultdict(float)
    for g in gen:
        cap[int(g[_GEN_BUS])] += max(0.0, g[_PMAX])
    kv = {int(b[_BUS]): float(b[_BASE_KV]) for b in bus}

    geo = {}
    if substation_geo is not None:
        geo = {r["substation"]: r for r in _read_table(substation_geo)}

    sub_buses = defaultdict(list)
    buses = []
    problems = []
    for b, name in zip(bus, names):
        bid = int(b[_BUS])
        sname = substation_name(name)
        sub_buses[sname].append(bid)
        zip_code = geo[sname]["zip"] if sname in geo else f"CITY:{city_name(sname)}"
        load = float(b[_PD])
        if load < 0:
            problems.append(f"bus {bid}: negative load {load} MW")
        buses.append(Bus(bid, sname, zip_code, load, cap.get(bid, 0.0)))

    substations = []
    for sname, ids in sub_buses.items():
        row = geo.get(sname)
        if row is None:
            loc, elev = PLACEHOLDER_LOCATION, DEFAULT_ELEVATION_M
        else:
            loc = GeoPoint(float(row["lat"]), float(row["lon"]))
            elev = float(row.get("elevation_m") or DEFAULT_ELEVATION_M)
        substations.append(Substation(sname, loc, elev, tuple(ids)))
    if substation_geo is None:
        log.warning("no substation geography supplied; all substations placed at %s", PLACEHOLDER_LOCATION)

    classes = sorted(float(v) for v in voltage_classes)
    branches = []
    for k, br in enumerate(branch, start=1):
        if br[_STATUS] == 0:
            continue
        f, t = int(br[_F]), int(br[_T])
        is_xfmr = br[_RATIO] != 0 or kv[f] != kv[t]
        volt = max(kv[f], kv[t])
        if volt not in classes:
            problems.append(f"branch {k} ({f}-{t}): {volt} kV outside voltage classes {classes}")
            continue
        rating = br[_RATE_A] if br[_RATE_A] > 0 else UNLIMITED_RATING_MW
        branches.append(Branch(k, f, t, float(br[_X]), float(rating), volt,
                               "transformer" if is_xfmr else "line"))
    if problems:
        raise ValidationError("MATPOWER case cannot be converted", problems)

    if county_map is not None:
        rows = [CountyMapRow(r["zip"], r["city"], r["county_fips"], float(r["population_share"]))
                for r in _read_table(county_map)]
    else:
        # each city becomes its own pseudo-county
        zip_city = {}
        for b in buses:
            zip_city.setdefault(b.zip, city_name(b.substation_id))
        rows = [CountyMapRow(z, c, f"UNMAPPED:{c}", 1.0) for z, c in sorted(zip_city.items())]
    return GridCase(base_mva, buses, branches, substations, rows)
