import math

import numpy as np
import pytest

from stormgrid.errors import ValidationError
from stormgrid.grid import CountyMapRow, parse_grid_case
from stormgrid.impact import (CountyMapper, aggregate_levels, county_demand, county_loss_timeseries,
                              county_peak_loss, expected_normalized_loss)
from stormgrid.powerflow import evaluate_outage_step

from conftest import make_case


def split_case():
    rows = [CountyMapRow("77001", "X", "48001", 1.0), CountyMapRow("77002", "Y", "48001", 0.7),
            CountyMapRow("77002", "Y", "48003", 0.3)]
    return make_case([40.0, 100.0], [200.0, 0.0], [(1, 2)], zips=["77001", "77002"], county_map=rows)


def test_city_split_seventy_thirty():
    demand = county_demand(split_case())
    assert demand["48001"] == pytest.approx(40.0 + 70.0, abs=1e-12)
    assert demand["48003"] == pytest.approx(30.0, abs=1e-12)


def test_levels_and_mapper_agree():
    case = split_case()
    zips, cities, counties = aggregate_levels(case, {1: 5.0, 2: 10.0})
    assert zips == {"77001": 5.0, "77002": 10.0} and cities == {"X": 5.0, "Y": 10.0}
    mapper = CountyMapper(case)
    assert mapper.as_dict(mapper.aggregate(np.array([5.0, 10.0]))) == pytest.approx(counties)


def test_unmapped_zip_rejected():
    case = split_case()
    bad = type(case)(case.base_mva, case.buses, case.branches, case.substations, case.county_map[:1])
    with pytest.raises(ValidationError):
        CountyMapper(bad)


def test_fixture_conservation(data_dir):
    case = parse_grid_case(data_dir / "grid.json")
    demand = county_demand(case)
    assert math.fsum(demand.values()) == pytest.approx(case.total_load_mw, abs=1e-6)
    rng = np.random.default_rng(0)
    ids = [br.id for br in case.branches]
    for _ in range(20):
        failed = rng.choice(ids, 8, replace=False)
        res = evaluate_outage_step(case, failed)
        series = county_loss_timeseries([res], case)
        assert math.fsum(v[0] for v in series.values()) == pytest.approx(res.total_shed, abs=1e-6)
        for c, v in series.items():
            assert -1e-9 <= v[0] <= demand[c] + 1e-9


def test_peak_loss():
    assert county_peak_loss({"A": [1.0, 5.0, 3.0], "B": [0.0]}) == {"A": 5.0, "B": 0.0}
    with pytest.raises(ValueError):
        county_peak_loss({"A": []})


def test_expectation_over_storms():
    peaks = {"s1": {"A": [20.0]}, "s2": {"A": [60.0]}}
    values, excluded = expected_normalized_loss(peaks, {"A": 100.0})
    assert values["A"] == pytest.approx(0.4, abs=1e-12) and excluded == []


def test_expectation_mean_of_samples_and_bounds():
    peaks = {"s1": {"A": [0.0, 50.0, 100.0], "B": [1.0, 1.0]}}
    values, _ = expected_normalized_loss(peaks, {"A": 100.0, "B": 10.0})
    assert values == pytest.approx({"A": 0.5, "B": 0.1})
    assert all(0.0 <= v <= 1.0 for v in values.values())


def test_zero_demand_county_excluded():
    values, excluded = expected_normalized_loss({"s": {"A": [1.0]}}, {"A": 10.0, "Z": 0.0})
    assert excluded == ["Z"] and "Z" not in values
    with pytest.raises(ValueError):
        expected_normalized_loss({}, {"A": 1.0})
