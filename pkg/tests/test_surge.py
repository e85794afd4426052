import io
import math
from datetime import datetime, timedelta, timezone

import numpy as np
import pytest
from hypothesis import given, strategies as st

from stormgrid.errors import NotFoundError, ParseError, ValidationError
from stormgrid.geo import EARTH_RADIUS_KM, GeoPoint
from stormgrid.grid import Substation
from stormgrid.hurricane import HurricaneTrack, TrackPoint
from stormgrid.surge import (Basin, SurgeGrid, SurgeKey, assign_basin, inundation_at,
                             parse_surge_grids, quantize_direction, select_meow, storm_motion,
                             surge_key_for_track)

HEADER = "basin,category,direction,speed_mph,tide,lat,lon,depth,unit\n"


def grid(basin="B", cat=2, direction="N", speed=10.0, tide="mean", cells=((29.0, -95.0, 1.0),)):
    arr = np.array(cells, float)
    return SurgeGrid(SurgeKey(basin, cat, direction, speed, tide), arr[:, 0], arr[:, 1], arr[:, 2])


def sub(lat=29.0, lon=-95.0, elev=3.0):
    return Substation("S", GeoPoint(lat, lon), elev, (1,))


def test_parse_two_keys():
    text = HEADER + ("B,2,N,10,mean,29.0,-95.0,4.0,m\n"
                     "B,2,N,10,mean,29.01,-95.0,5.0,m\n"
                     "B,3,NE,5,high,29.0,-95.0,2.0,m\n")
    grids = parse_surge_grids(io.StringIO(text))
    assert len(grids) == 2
    assert grids[0].max_depth == 5.0 and len(grids[0].cells) == 2


def test_parse_feet_converted():
    (g,) = parse_surge_grids(io.StringIO(HEADER + "B,2,N,10,mean,29.0,-95.0,10,ft\n"))
    assert g.depth[0] == pytest.approx(3.048, abs=1e-12)


def test_parse_negative_depth():
    with pytest.raises(ValidationError):
        parse_surge_grids(io.StringIO(HEADER + "B,2,N,10,mean,29.0,-95.0,-1,m\n"))


def test_parse_unknown_tide():
    with pytest.raises(ParseError):
        parse_surge_grids(io.StringIO(HEADER + "B,2,N,10,spring,29.0,-95.0,1,m\n"))


def test_parse_key_without_cells():
    with pytest.raises(ValidationError):
        parse_surge_grids(io.StringIO(HEADER + "B,2,N,10,mean,,,,m\n"))


def test_parse_category_zero_rejected():
    with pytest.raises(ParseError):
        parse_surge_grids(io.StringIO(HEADER + "B,0,N,10,mean,29.0,-95.0,1,m\n"))


def test_select_exact():
    grids = [grid(speed=10), grid(speed=20), grid(cat=3)]
    assert select_meow(grids, SurgeKey("B", 2, "N", 20)) is grids[1]


def test_select_nearest_speed():
    grids = [grid(speed=20), grid(speed=10)]
    assert select_meow(grids, SurgeKey("B", 2, "N", 12)) is grids[1]


def test_select_direction_then_label():
    grids = [grid(direction="W"), grid(direction="NE"), grid(direction="NW")]
    assert select_meow(grids, SurgeKey("B", 2, "NNE", 10)).key.direction == "NE"
    # N is 45 degrees from both NE and NW: lexicographic label breaks the tie
    assert select_meow(grids, SurgeKey("B", 2, "N", 10)).key.direction == "NE"
    assert select_meow(grids, SurgeKey("B", 2, "N", 10)) is select_meow(grids[::-1], SurgeKey("B", 2, "N", 10))


def test_select_not_found():
    with pytest.raises(NotFoundError):
        select_meow([grid(cat=2)], SurgeKey("B", 1, "N", 10))
    with pytest.raises(NotFoundError):
        select_meow([grid(tide="mean")], SurgeKey("B", 2, "N", 10, "high"))


def test_category_zero_storm_selects_nothing():
    pts = [TrackPoint(datetime(2020, 1, 1, tzinfo=timezone.utc) + timedelta(hours=3 * k),
                      GeoPoint(28 + 0.3 * k, -95), 25.0, 30.0, 200.0, 0) for k in range(4)]
    t = HurricaneTrack("A", "A", tuple(pts))
    assert surge_key_for_track(t, 2, "B") is None


def _offset(km):
    return math.degrees(km / EARTH_RADIUS_KM)


def test_inundation_examples():
    g = grid(cells=((29.0 + _offset(0.5), -95.0, 5.0), (29.0 + _offset(2.0), -95.0, 9.0)))
    assert inundation_at(sub(), g).depth == pytest.approx(2.0)
    low = grid(cells=((29.0, -95.0, 2.0),))
    assert inundation_at(sub(), low).depth == 0.0
    far = grid(cells=((29.0 + _offset(0.9), -95.0, 9.0),))
    assert inundation_at(sub(), far).depth == 0.0


@given(st.floats(0, 10), st.floats(0, 10), st.lists(st.floats(0, 20), min_size=1, max_size=10))
def test_inundation_monotone_and_bounded(e1, e2, depths):
    cells = [(29.0 + _offset(0.1 * i), -95.0, d) for i, d in enumerate(depths)]
    g = grid(cells=cells)
    lo, hi = sorted((e1, e2))
    d_lo = inundation_at(sub(elev=lo), g).depth
    d_hi = inundation_at(sub(elev=hi), g).depth
    assert d_hi <= d_lo
    assert 0.0 <= d_lo <= g.max_depth


def test_quantize_direction():
    assert quantize_direction(0) == "N"
    assert quantize_direction(359) == "N"
    assert quantize_direction(44) == "NE"
    assert quantize_direction(180) == "S"
    assert quantize_direction(290) == "W"


def test_storm_motion_northward():
    step = _offset(30.0)
    pts = [TrackPoint(datetime(2020, 1, 1, tzinfo=timezone.utc) + timedelta(hours=3 * k),
                      GeoPoint(28 + step * k, -95), 50.0, 30.0, 200.0, 3) for k in range(5)]
    speed, heading = storm_motion(HurricaneTrack("A", "A", tuple(pts)), 2)
    assert heading == "N"
    assert speed == pytest.approx(10.0 / 1.609344, rel=1e-9)


def test_assign_basin():
    b = Basin("B", ((29, -96), (30, -96), (30, -95), (29, -95)))
    assert assign_basin(GeoPoint(29.5, -95.5), [b]) is b
    assert assign_basin(GeoPoint(28.5, -95.5), [b]) is None
