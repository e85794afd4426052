"""County-level load loss.

Bus quantities roll up bus -> zip -> city -> county; a city spanning several
counties is split by the population share living in each.
"""

import math
from collections import defaultdict
from typing import Mapping, Sequence

import numpy as np

from .errors import ValidationError
from .grid import GridCase


def aggregate_levels(case: GridCase, bus_values: Mapping[int, float]):
    """Roll per-bus values up to zip, city and county dicts."""
    zip_city = case.zip_city()
    missing = sorted({case.bus(b).zip for b in bus_values} - set(zip_city))
    if missing:
        raise ValidationError("bus zips without county mapping", missing)
    by_zip = defaultdict(float)
    for b, v in bus_values.items():
        by_zip[case.bus(b).zip] += v
    by_city = defaultdict(float)
    for z, v in by_zip.items():
        by_city[zip_city[z]] += v
    shares = case.city_county_shares()
    by_county = defaultdict(float)
    for city, v in by_city.items():
        for county, share in shares[city].items():
            by_county[county] += v * share
    return dict(by_zip), dict(by_city), dict(by_county)


class CountyMapper:
    """Linear bus -> county map as a dense weight matrix (counties x buses)."""

    def __init__(self, case: GridCase):
        zip_city = case.zip_city()
        missing = sorted({b.zip for b in case.buses} - set(zip_city))
        if missing:
            raise ValidationError("bus zips without county mapping", missing)
        shares = case.city_county_shares()
        self.counties = case.counties()
        pos = {c: i for i, c in enumerate(self.counties)}
        self.weights = np.zeros((len(self.counties), len(case.buses)))
        for j, bus in enumerate(case.buses):
            for county, share in shares[zip_city[bus.zip]].items():
                self.weights[pos[county], j] += share

    def aggregate(self, bus_values: np.ndarray) -> np.ndarray:
        """County totals for values in ``case.buses`` order; works row-wise on 2-D input."""
        return np.asarray(bus_values) @ self.weights.T

    def as_dict(self, county_values: np.ndarray) -> dict:
        return {c: float(v) for c, v in zip(self.counties, county_values)}


def county_demand(case: GridCase) -> dict:
    """Total bus load (MW) served in each county."""
    mapper = CountyMapper(case)
    return mapper.as_dict(mapper.aggregate(case.arrays.load))


def county_loss_timeseries(dispatches: Sequence, case: GridCase) -> dict:
    """county -> array of shed MW, one entry per dispatch (time step)."""
    mapper = CountyMapper(case)
    shed = np.array([d.shed for d in dispatches]).reshape(len(dispatches), len(case.buses))
    per_t = mapper.aggregate(shed)
    return {c: per_t[:, i] for i, c in enumerate(mapper.counties)}


def county_peak_loss(series: Mapping[str, Sequence[float]]) -> dict:
    """Largest loss over the storm's time steps, per county."""
    out = {}
    for county, values in series.items():
        values = np.asarray(values, float)
        if values.size == 0:
            raise ValueError(f"empty loss series for county {county}")
        out[county] = float(values.max())
    return out


def expected_normalized_loss(peaks: Mapping[str, Mapping[str, Sequence[float]]],
                             demands: Mapping[str, float]):
    """Expected normalised peak loss per county over storms.

    ``peaks[storm][county]`` holds one peak loss (MW) per Monte Carlo sample.
    For each storm the sample mean is divided by county demand; the result
    is the unweighted mean over storms. Returns ``(values, excluded)`` where
    ``excluded`` lists counties with zero demand, which get no value.
    """
    if not peaks:
        raise ValueError("need at least one storm")
    excluded = sorted(c for c, d in demands.items() if not d > 0)
    values = {}
    for county, demand in demands.items():
        if not demand > 0:
            continue
        per_storm = []
        for storm in peaks.values():
            samples = np.asarray(storm.get(county, [0.0]), float)
            per_storm.append(float(samples.mean()) / demand)
        values[county] = min(1.0, max(0.0, math.fsum(per_storm) / len(per_storm)))
    return values, excluded
