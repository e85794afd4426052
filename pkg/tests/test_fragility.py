import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from stormgrid.errors import ConfigError
from stormgrid.fragility import (DEFAULT_WIND_THRESHOLDS, FloodFragilityParams, WindFragilityTable,
                                 line_outage_prob, substation_outage_prob)

TABLE = WindFragilityTable()


def test_default_wind_thresholds():
    assert TABLE.thresholds == {115.0: (25.0, 55.0), 161.0: (30.0, 60.0),
                                230.0: (35.0, 65.0), 500.0: (45.0, 75.0)}


def test_line_examples():
    assert line_outage_prob(25.0, 115, TABLE) == 0.0
    assert line_outage_prob(55.0, 115, TABLE) == 1.0
    assert line_outage_prob(40.0, 115, TABLE) == 0.5


def test_line_unknown_class():
    with pytest.raises(ConfigError):
        line_outage_prob(40.0, 345, TABLE)


def test_table_rejects_inverted_thresholds():
    with pytest.raises(ConfigError):
        WindFragilityTable({115.0: (50.0, 40.0)})
    assert TABLE.covers([115, 345, 500]) == [345.0]


def test_line_vectorised():
    p = line_outage_prob(np.array([0.0, 40.0, 100.0]), 115, TABLE)
    assert p.tolist() == [0.0, 0.5, 1.0]


@given(st.floats(0, 120), st.floats(0, 120))
def test_line_monotone(g1, g2):
    lo, hi = sorted((g1, g2))
    for kv in DEFAULT_WIND_THRESHOLDS:
        assert line_outage_prob(lo, kv, TABLE) <= line_outage_prob(hi, kv, TABLE)
        assert 0.0 <= line_outage_prob(lo, kv, TABLE) <= 1.0


@given(st.floats(0, 120))
def test_higher_voltage_never_more_fragile(g):
    classes = sorted(DEFAULT_WIND_THRESHOLDS)
    probs = [line_outage_prob(g, kv, TABLE) for kv in classes]
    assert probs == sorted(probs, reverse=True)


def test_flood_examples():
    f = FloodFragilityParams()
    assert substation_outage_prob(0.0, f) == 0.0
    assert substation_outage_prob(f.a, f) == pytest.approx(1 - math.exp(-1), abs=1e-12)
    assert substation_outage_prob(10 * f.a, f) == pytest.approx(1.0, abs=1e-12)


def test_flood_validation():
    with pytest.raises(ConfigError):
        FloodFragilityParams(a=0.0)
    with pytest.raises(ConfigError):
        FloodFragilityParams(b=2.0)
    with pytest.raises(ValueError):
        substation_outage_prob(-0.1, FloodFragilityParams())


@given(st.floats(0, 8), st.floats(0, 8), st.floats(0.5, 5), st.floats(2.01, 6))
def test_flood_monotone_bounded(d1, d2, a, b):
    f = FloodFragilityParams(a, b)
    lo, hi = sorted((d1, d2))
    p_lo, p_hi = substation_outage_prob(lo, f), substation_outage_prob(hi, f)
    assert 0.0 <= p_lo <= p_hi <= 1.0
    if lo < hi and p_hi < 1.0 and p_lo > 0.0:
        assert p_lo < p_hi
