import itertools
import math

import numpy as np
import pytest

from stormgrid.errors import NumericalError
from stormgrid.geo import GeoPoint
from stormgrid.grid import Branch, Bus, CountyMapRow, GridCase, Substation
from stormgrid.powerflow import (balance_island, dc_power_flow, evaluate_outage_step, find_islands,
                                 solve_dc)

from conftest import make_case


def dfs_components(n, edges):
    """Reference components by iterative depth-first search over bus indices."""
    adj = [[] for _ in range(n)]
    for a, b in edges:
        adj[a].append(b)
        adj[b].append(a)
    seen = [False] * n
    comps = []
    for s in range(n):
        if seen[s]:
            continue
        stack, comp = [s], []
        seen[s] = True
        while stack:
            u = stack.pop()
            comp.append(u)
            for v in adj[u]:
                if not seen[v]:
                    seen[v] = True
                    stack.append(v)
        comps.append(frozenset(comp))
    return set(comps)


def random_case(rng, n=50, m=80):
    edges = []
    while len(edges) < m:
        a, b = rng.integers(0, n, 2)
        if a != b:
            edges.append((int(a) + 1, int(b) + 1))
    loads = rng.uniform(0, 50, n)
    caps = np.where(rng.random(n) < 0.3, rng.uniform(10, 200, n), 0.0)
    return make_case(loads.tolist(), caps.tolist(), edges, reactance=rng.uniform(0.01, 0.3, m).tolist())


def test_islands_match_dfs_on_random_graphs():
    rng = np.random.default_rng(11)
    for _ in range(1000):
        case = random_case(rng)
        failed = {int(i) for i in rng.choice(np.arange(1, 81), rng.integers(0, 40), replace=False)}
        kept = [(br.from_bus - 1, br.to_bus - 1) for br in case.branches if br.id not in failed]
        got = {frozenset(b - 1 for b in isl.bus_ids) for isl in find_islands(case, failed)}
        assert got == dfs_components(50, kept)


def test_islands_basic():
    case = make_case([1, 1, 1, 1], [5, 0, 0, 3], [(1, 2), (2, 3), (3, 4)])
    assert len(find_islands(case)) == 1
    isl = find_islands(case, {2})
    assert [i.bus_ids for i in isl] == [(1, 2), (3, 4)]
    assert [i.slack_bus for i in isl] == [1, 4]
    assert isl[1].total_capacity == 3 and isl[1].total_load == 2


def test_slack_without_generation_is_lowest_bus():
    case = make_case([1, 1], [0, 0], [(2, 1)])
    assert find_islands(case)[0].slack_bus == 1


def test_deficit_sheds_forty_percent():
    case = make_case([30, 50, 20], [60, 0, 0], [(1, 2), (2, 3)])
    (isl,) = find_islands(case)
    bal = balance_island(isl, case)
    assert bal.shed_fraction == pytest.approx(0.4, rel=1e-9)
    for b, load in zip((1, 2, 3), (30, 50, 20)):
        assert bal.shed[b] / load == pytest.approx(0.4, rel=1e-9)
        assert bal.served[b] + bal.shed[b] == pytest.approx(load, abs=1e-9)
    assert bal.generation[1] == 60


def test_surplus_scales_generation():
    case = make_case([20, 30], [50, 30], [(1, 2)])
    (isl,) = find_islands(case)
    bal = balance_island(isl, case)
    assert bal.shed_fraction == 0.0
    assert all(v == 0 for v in bal.shed.values())
    assert bal.generation[1] / 50 == pytest.approx(50 / 80, rel=1e-9)
    assert bal.generation[2] / 30 == pytest.approx(0.625, rel=1e-9)


def test_offline_island_sheds_everything():
    case = make_case([10, 20], [0, 0], [(1, 2)])
    bal = balance_island(find_islands(case)[0], case)
    assert bal.shed == {1: 10, 2: 20}


def test_priority_shedding_removes_least_critical_first():
    buses = [Bus(1, "S1", "Z", 40.0, 60.0, 2.0), Bus(2, "S2", "Z", 30.0, 0.0, 0.0),
             Bus(3, "S3", "Z", 30.0, 0.0, 1.0)]
    subs = [Substation(f"S{i}", GeoPoint(29 + 0.1 * i, -95), 3.0, (i,)) for i in (1, 2, 3)]
    case = GridCase(100.0, buses, [Branch(1, 1, 2, 0.1, 100, 115), Branch(2, 2, 3, 0.1, 100, 115)], subs,
                    [CountyMapRow("Z", "Z", "C", 1.0)])
    res = evaluate_outage_step(case)
    assert res.shed.tolist() == pytest.approx([0.0, 30.0, 10.0])


def test_two_bus_flow():
    case = make_case([10, 10], [20, 0], [(1, 2)], reactance=0.1)
    (isl,) = find_islands(case)
    angles, flows = dc_power_flow(case, isl, {1: 10.0, 2: -10.0})
    assert flows[1] == pytest.approx(10.0, abs=1e-9)
    assert angles[1] - angles[2] == pytest.approx(0.01, abs=1e-12)


def test_zero_injections():
    case = make_case([0, 0, 0], [0, 0, 0], [(1, 2), (2, 3), (1, 3)])
    angles, flows = dc_power_flow(case, find_islands(case)[0], {1: 0.0, 2: 0.0, 3: 0.0})
    assert all(v == 0 for v in angles.values()) and all(v == 0 for v in flows.values())


def test_triangle_hand_solution():
    case = make_case([0, 0, 0], [0, 0, 0], [(1, 2), (1, 3), (2, 3)], reactance=0.1)
    _, flows = dc_power_flow(case, find_islands(case)[0], {1: 10.0, 2: -10.0, 3: 0.0})
    # reduced system with bus 1 as reference: 20*t2 - 10*t3 = -0.1, -10*t2 + 20*t3 = 0
    assert flows[1] == pytest.approx(20 / 3, abs=1e-8)
    assert flows[2] == pytest.approx(10 / 3, abs=1e-8)
    assert flows[3] == pytest.approx(-10 / 3, abs=1e-8)


def test_unbalanced_injection_rejected():
    case = make_case([0, 0], [0, 0], [(1, 2)])
    with pytest.raises(ValueError):
        dc_power_flow(case, find_islands(case)[0], {1: 1.0, 2: 0.0})


def test_singular_matrix_reported():
    with pytest.raises(NumericalError):
        solve_dc(3, [0], [1], [0.1], np.zeros(3), 0)


def test_residual_and_conservation_random_islands():
    rng = np.random.default_rng(5)
    for _ in range(100):
        case = random_case(rng, n=30, m=45)
        failed = set(rng.choice(np.arange(1, 46), 10, replace=False).tolist())
        res = evaluate_outage_step(case, failed)
        arr = case.arrays
        inj = (res.generation - res.served) / case.base_mva
        alive = ~np.isnan(res.flow)
        b = 1.0 / arr.reactance[alive]
        f, t = arr.from_idx[alive], arr.to_idx[alive]
        net = np.zeros(len(case.buses))
        np.add.at(net, f, (res.angles[f] - res.angles[t]) * b)
        np.add.at(net, t, (res.angles[t] - res.angles[f]) * b)
        assert np.max(np.abs(net - inj)) <= 1e-8
        assert np.allclose(res.served + res.shed, arr.load, atol=1e-6)
        assert np.all(res.generation >= -1e-12) and np.all(res.generation <= arr.capacity + 1e-9)
        for isl in res.islands:
            idx = [case.bus_index[i] for i in isl.bus_ids]
            assert math.fsum(res.generation[idx]) == pytest.approx(math.fsum(res.served[idx]), abs=1e-6)
            loads = arr.load[idx]
            fr = [res.shed[i] / arr.load[i] for i in idx if arr.load[i] > 0]
            if fr:
                assert max(fr) - min(fr) <= 1e-9 * max(1.0, max(fr))


def test_flow_antisymmetry():
    case = make_case([0, 10, 5], [15, 0, 0], [(1, 2), (2, 3), (1, 3)])
    rev = make_case([0, 10, 5], [15, 0, 0], [(2, 1), (3, 2), (3, 1)])
    a = evaluate_outage_step(case).flow
    b = evaluate_outage_step(rev).flow
    assert np.allclose(a, -b, atol=1e-12)


def test_empty_failure_set_no_shed():
    case = make_case([10, 10], [30, 0], [(1, 2)])
    assert evaluate_outage_step(case).total_shed == 0.0


def test_all_branches_failed():
    case = make_case([10, 10, 10], [30, 5, 0], [(1, 2), (2, 3)])
    res = evaluate_outage_step(case, {1, 2})
    assert res.shed.tolist() == pytest.approx([0.0, 5.0, 10.0])
    assert np.isnan(res.flow).all()


def test_shed_monotone_on_trees():
    rng = np.random.default_rng(2)
    for _ in range(30):
        n = 8
        edges = [(int(rng.integers(1, k + 1)), k + 1) for k in range(1, n)]
        case = make_case(rng.uniform(0, 20, n).tolist(),
                         np.where(rng.random(n) < 0.4, rng.uniform(0, 40, n), 0).tolist(), edges)
        ids = [br.id for br in case.branches]
        shed = {}
        for r in range(len(ids) + 1):
            for sub in itertools.combinations(ids, r):
                shed[frozenset(sub)] = evaluate_outage_step(case, sub, solve_flows=False).total_shed
        for s, v in shed.items():
            for extra in ids:
                if extra not in s:
                    assert shed[s | {extra}] >= v - 1e-9


def test_overloads_reported_not_enforced():
    case = make_case([100, 0], [0, 200], [(1, 2)])
    case = GridCase(case.base_mva, case.buses, [Branch(1, 1, 2, 0.1, 50.0, 115.0)], case.substations,
                    case.county_map)
    res = evaluate_outage_step(case)
    assert res.overloaded == (1,)
    assert res.total_shed == 0.0
