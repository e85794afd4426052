import io
import json

import pytest

from stormgrid.errors import NotFoundError, ValidationError
from stormgrid.geo import GeoPoint, Polyline
from stormgrid.grid import (Branch, Bus, CountyMapRow, GridCase, Substation, branches_of_substation,
                            case_to_dict, parse_grid_case, validate_case, write_grid_case)

from conftest import make_case

TWO_BUS = {
    "base_mva": 100.0,
    "buses": [{"id": 1, "substation_id": "A", "zip": "77001", "load_mw": 40.0, "gen_capacity_mw": 100.0},
              {"id": 2, "substation_id": "B", "zip": "77002", "load_mw": 60.0}],
    "branches": [{"id": 1, "from_bus": 1, "to_bus": 2, "reactance_pu": 0.1, "rating_mw": 200.0,
                  "voltage_kv": 115}],
    "substations": [{"id": "A", "location": {"lat": 29.0, "lon": -95.0}, "bus_ids": [1]},
                    {"id": "B", "location": {"lat": 29.1, "lon": -95.0}, "elevation_m": 4.0, "bus_ids": [2]}],
    "county_map": [{"zip": "77001", "city": "X", "county_fips": "48001", "population_share": 1.0},
                   {"zip": "77002", "city": "Y", "county_fips": "48001", "population_share": 0.7},
                   {"zip": "77002", "city": "Y", "county_fips": "48003", "population_share": 0.3}],
}


def load(d):
    return parse_grid_case(io.StringIO(json.dumps(d)))


def test_two_bus_totals():
    case = load(TWO_BUS)
    assert case.total_load_mw == 100.0
    assert case.total_capacity_mw == 100.0
    assert case.substation("A").elevation_m == 3.0
    assert case.substation("B").elevation_m == 4.0
    assert case.counties() == ["48001", "48003"]


def test_dangling_branch_names_branch_and_bus():
    d = json.loads(json.dumps(TWO_BUS))
    d["branches"].append({"id": 7, "from_bus": 1, "to_bus": 999, "reactance_pu": 0.1,
                          "rating_mw": 1.0, "voltage_kv": 115})
    with pytest.raises(ValidationError) as exc:
        load(d)
    assert any("branch 7" in p and "999" in p for p in exc.value.problems)


def test_duplicates_and_unmapped_zip_all_reported():
    d = json.loads(json.dumps(TWO_BUS))
    d["buses"][1]["zip"] = "99999"
    d["branches"].append(dict(d["branches"][0]))
    with pytest.raises(ValidationError) as exc:
        load(d)
    text = " | ".join(exc.value.problems)
    assert "duplicate branch id 1" in text and "99999" in text


def test_city_shares_must_sum_to_one():
    d = json.loads(json.dumps(TWO_BUS))
    d["county_map"][2]["population_share"] = 0.2
    with pytest.raises(ValidationError, match="sum"):
        load(d)


def test_unknown_voltage_class():
    d = json.loads(json.dumps(TWO_BUS))
    d["branches"][0]["voltage_kv"] = 345
    with pytest.raises(ValidationError):
        load(d)


def test_round_trip(tmp_path):
    case = load(TWO_BUS)
    geom = Polyline((GeoPoint(29.0, -95.0), GeoPoint(29.05, -94.98), GeoPoint(29.1, -95.0)))
    case = GridCase(case.base_mva, case.buses,
                    [Branch(1, 1, 2, 0.1, 200.0, 115.0, "line", geom)], case.substations, case.county_map)
    write_grid_case(case, tmp_path / "g.json")
    again = parse_grid_case(tmp_path / "g.json")
    assert again == case
    assert case_to_dict(again) == case_to_dict(case)


def test_fixture_round_trip_and_totals(data_dir, tmp_path):
    case = parse_grid_case(data_dir / "grid.json")
    write_grid_case(case, tmp_path / "g.json")
    assert parse_grid_case(tmp_path / "g.json") == case
    assert case.total_load_mw == pytest.approx(sum(b.load_mw for b in case.buses), abs=1e-6)
    assert len(case.buses) == 20
    zip_city = case.zip_city()
    shares = case.city_county_shares()
    for b in case.buses:
        assert shares[zip_city[b.zip]]


def test_disconnected_case_warns(caplog):
    d = json.loads(json.dumps(TWO_BUS))
    d["branches"] = []
    load(d)
    assert "disconnected" in caplog.text


def _multi_case():
    buses = [Bus(1, "A", "Z", 1.0), Bus(2, "A", "Z", 1.0), Bus(3, "B", "Z", 1.0), Bus(4, "C", "Z", 1.0)]
    subs = [Substation("A", GeoPoint(29, -95), 3.0, (1, 2)), Substation("B", GeoPoint(29.1, -95), 3.0, (3,)),
            Substation("C", GeoPoint(29.2, -95), 3.0, (4,))]
    branches = [Branch(1, 1, 2, 0.1, 10, 115, "transformer"), Branch(2, 2, 3, 0.1, 10, 115),
                Branch(3, 3, 1, 0.1, 10, 115), Branch(4, 3, 4, 0.1, 10, 115)]
    return GridCase(100.0, buses, branches, subs, [CountyMapRow("Z", "Z", "C1", 1.0)])


def test_branches_of_substation():
    case = _multi_case()
    assert [br.id for br in branches_of_substation(case, "A")] == [1, 2, 3]
    with pytest.raises(NotFoundError):
        branches_of_substation(case, "nope")
    for s in case.substations:
        members = set(s.bus_ids)
        brute = [br for br in case.branches if br.from_bus in members or br.to_bus in members]
        assert branches_of_substation(case, s.id) == brute


def test_substation_without_branches():
    case = make_case([1.0, 2.0], edges=[])
    assert branches_of_substation(case, "S1") == []


def test_bus_in_two_substations_flagged():
    case = _multi_case()
    subs = list(case.substations)
    subs[1] = Substation("B", subs[1].location, 3.0, (3, 1))
    bad = GridCase(100.0, case.buses, case.branches, subs, case.county_map)
    assert any("bus 1" in p for p in validate_case(bad))


def test_transformer_has_no_geometry():
    case = _multi_case()
    assert case.branch_geometry(case.branches[0]) is None
    assert case.branch_geometry(case.branches[1]) is not None
