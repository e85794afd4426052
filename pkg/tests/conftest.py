from pathlib import Path

import pytest

from stormgrid.geo import GeoPoint
from stormgrid.grid import Branch, Bus, CountyMapRow, GridCase, Substation

DATA = Path(__file__).parent / "data"


def make_case(loads, caps=None, edges=(), reactance=0.1, base_mva=100.0, kv=115.0, locations=None,
              county_map=None, zips=None):
    """One bus per substation; bus ids 1..n, branch ids 1..m in ``edges`` order."""
    n = len(loads)
    caps = caps or [0.0] * n
    zips = zips or ["Z"] * n
    buses = [Bus(i + 1, f"S{i + 1}", zips[i], float(loads[i]), float(caps[i])) for i in range(n)]
    if locations is None:
        locations = [GeoPoint(29.0 + 0.05 * i, -95.0) for i in range(n)]
    subs = [Substation(f"S{i + 1}", locations[i], 3.0, (i + 1,)) for i in range(n)]
    x = reactance if isinstance(reactance, (list, tuple)) else [reactance] * len(edges)
    branches = [Branch(k + 1, f, t, x[k], 1000.0, kv) for k, (f, t) in enumerate(edges)]
    if county_map is None:
        county_map = [CountyMapRow(z, f"CITY-{z}", f"C-{z}", 1.0) for z in sorted(set(zips))]
    return GridCase(base_mva, buses, branches, subs, county_map)


@pytest.fixture
def data_dir():
    return DATA
