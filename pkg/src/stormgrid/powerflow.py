"""Islanding, island balancing and DC power flow.

After branch outages the bus graph splits into islands. Each island is
balanced on its own: surplus generation is scaled back proportionally, a
deficit is met by shedding the same fraction of load at every bus (or by
criticality when bus priorities are given). A DC flow solve then reports
angles and branch flows; ratings are checked but not enforced.
"""

import logging
import math
from dataclasses import dataclass
from typing import Iterable, Optional

import numpy as np
from scipy import linalg
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from .errors import NumericalError
from .grid import GridCase

log = logging.getLogger(__name__)

BALANCE_TOL_MW = 1e-6


@dataclass(frozen=True)
class Island:
    island_id: int
    bus_ids: tuple
    total_load: float
    total_capacity: float
    slack_bus: int


@dataclass(frozen=True)
class IslandBalance:
    """Per-bus dispatch targets for one island (dicts keyed by bus id)."""

    served: dict
    shed: dict
    generation: dict
    shed_fraction: float

    def injections(self) -> dict:
        return {b: self.generation[b] - self.served[b] for b in self.served}


@dataclass(frozen=True, eq=False)
class DispatchResult:
    """Outcome of one outage step.

    Bus arrays follow ``case.buses`` order; ``flow`` follows ``case.branches``
    and is NaN for out-of-service branches.
    """

    bus_ids: np.ndarray
    served: np.ndarray
    shed: np.ndarray
    generation: np.ndarray
    flow: np.ndarray
    angles: np.ndarray
    islands: tuple
    island_shed_fraction: dict
    overloaded: tuple

    @property
    def total_shed(self) -> float:
        return float(self.shed.sum())

    def shed_by_bus(self) -> dict:
        return {int(b): float(s) for b, s in zip(self.bus_ids, self.shed)}


def _labels(case: GridCase, failed_branches: Iterable[int]):
    arr = case.arrays
    n = len(case.buses)
    failed = set(failed_branches)
    alive = np.array([br.id not in failed for br in case.branches], bool)
    adj = coo_matrix((np.ones(int(alive.sum())), (arr.from_idx[alive], arr.to_idx[alive])),
                     shape=(n, n))
    _, labels = connected_components(adj, directed=False)
    return labels, alive


def _slack(bus_ids: np.ndarray, capacity: np.ndarray) -> int:
    with_gen = bus_ids[capacity > 0]
    return int(with_gen.min() if with_gen.size else bus_ids.min())


def _islands_from_labels(case: GridCase, labels: np.ndarray) -> list:
    arr = case.arrays
    groups = {}
    for idx, lab in enumerate(labels):
        groups.setdefault(int(lab), []).append(idx)
    members = sorted(groups.values(), key=lambda idxs: arr.bus_ids[idxs].min())
    islands = []
    for k, idxs in enumerate(members):
        idxs = np.array(idxs)
        ids = arr.bus_ids[idxs]
        islands.append(Island(k, tuple(sorted(int(i) for i in ids)),
                              math.fsum(arr.load[idxs]), math.fsum(arr.capacity[idxs]),
                              _slack(ids, arr.capacity[idxs])))
    return islands


def find_islands(case: GridCase, failed_branches: Iterable[int] = ()) -> list:
    """Connected components of the bus graph without ``failed_branches``.

    Islands are numbered by their smallest bus id.
    """
    labels, _ = _labels(case, failed_branches)
    return _islands_from_labels(case, labels)


def _balance(load: np.ndarray, capacity: np.ndarray, priority: Optional[np.ndarray]):
    """(served, generation, shed_fraction) arrays for one island."""
    total_load = math.fsum(load)
    total_cap = math.fsum(capacity)
    if total_cap >= total_load:
        gen = capacity * (total_load / total_cap) if total_cap > 0 else np.zeros_like(capacity)
        return load.copy(), gen, 0.0
    deficit = total_load - total_cap
    frac = deficit / total_load
    if priority is None:
        served = load * (1.0 - frac)
    else:
        # shed whole priority levels from the least critical up; the marginal
        # level absorbs the remainder uniformly
        served = load.copy()
        remaining = deficit
        for level in np.unique(priority):
            mask = priority == level
            level_load = math.fsum(load[mask])
            if level_load <= 0:
                continue
            cut = min(1.0, remaining / level_load)
            served[mask] = load[mask] * (1.0 - cut)
            remaining -= cut * level_load
            if remaining <= 0:
                break
    return served, capacity.copy(), frac


def balance_island(island: Island, case: GridCase) -> IslandBalance:
    """Balance one island by uniform curtailment of load or generation."""
    arr = case.arrays
    idx = np.array([case.bus_index[b] for b in island.bus_ids])
    prio = None if arr.priority is None else arr.priority[idx]
    served, gen, frac = _balance(arr.load[idx], arr.capacity[idx], prio)
    ids = island.bus_ids
    return IslandBalance(
        served={b: float(v) for b, v in zip(ids, served)},
        shed={b: float(v) for b, v in zip(ids, arr.load[idx] - served)},
        generation={b: float(v) for b, v in zip(ids, gen)},
        shed_fraction=frac,
    )


def solve_dc(n: int, from_idx, to_idx, reactance, injections_pu, slack: int):
    """Angles (rad) solving B·θ = P on ``n`` local buses with θ[slack] = 0."""
    from_idx = np.asarray(from_idx, int)
    to_idx = np.asarray(to_idx, int)
    b = 1.0 / np.asarray(reactance, float)
    B = np.zeros((n, n))
    np.add.at(B, (from_idx, from_idx), b)
    np.add.at(B, (to_idx, to_idx), b)
    np.add.at(B, (from_idx, to_idx), -b)
    np.add.at(B, (to_idx, from_idx), -b)
    theta = np.zeros(n)
    if n == 1:
        return theta, B
    keep = np.array([i for i in range(n) if i != slack])
    Bred = B[np.ix_(keep, keep)]
    try:
        factor = linalg.cho_factor(Bred, check_finite=True)
    except linalg.LinAlgError as exc:
        raise NumericalError(f"reduced susceptance matrix ({n - 1}x{n - 1}) is singular or "
                             f"not positive definite: {exc}") from None
    diag = np.abs(np.diag(factor[0]))
    if diag.min() < 1e-12 * max(1.0, diag.max()):
        raise NumericalError(f"reduced susceptance matrix is near-singular (min pivot {diag.min():.3e})")
    theta[keep] = linalg.cho_solve(factor, np.asarray(injections_pu, float)[keep])
    return theta, B


def dc_power_flow(case: GridCase, island: Island, injections: dict,
                  failed_branches: Iterable[int] = ()):
    """DC flow inside ``island`` for bus injections in MW.

    Returns ``(angles, flows)``: bus id -> radians and branch id -> MW
    (positive from ``from_bus`` to ``to_bus``).
    """
    total = math.fsum(injections.values())
    if abs(total) > BALANCE_TOL_MW:
        raise ValueError(f"island {island.island_id} injections unbalanced by {total:.3e} MW")
    members = {b: k for k, b in enumerate(island.bus_ids)}
    failed = set(failed_branches)
    branches = [br for br in case.branches
                if br.id not in failed and br.from_bus in members and br.to_bus in members]
    p = np.array([injections[b] for b in island.bus_ids]) / case.base_mva
    theta, _ = solve_dc(len(members), [members[br.from_bus] for br in branches],
                        [members[br.to_bus] for br in branches],
                        [br.reactance_pu for br in branches], p, members[island.slack_bus])
    angles = {b: float(theta[k]) for b, k in members.items()}
    flows = {br.id: float((theta[members[br.from_bus]] - theta[members[br.to_bus]])
                          / br.reactance_pu * case.base_mva) for br in branches}
    return angles, flows


def evaluate_outage_step(case: GridCase, failed_branches: Iterable[int] = (),
                         solve_flows: bool = True) -> DispatchResult:
    """Island, balance and solve the grid with ``failed_branches`` out of service."""
    failed_branches = frozenset(failed_branches)
    arr = case.arrays
    labels, alive = _labels(case, failed_branches)
    islands = _islands_from_labels(case, labels)
    n = len(case.buses)
    served = np.zeros(n)
    gen = np.zeros(n)
    angles = np.zeros(n)
    flow = np.full(len(case.branches), np.nan)
    fractions = {}
    for isl in islands:
        idx = np.array(sorted(case.bus_index[b] for b in isl.bus_ids))
        prio = None if arr.priority is None else arr.priority[idx]
        s, g, f = _balance(arr.load[idx], arr.capacity[idx], prio)
        served[idx] = s
        gen[idx] = g
        fractions[isl.island_id] = f
        if not solve_flows or idx.size == 1:
            continue
        local = {int(i): k for k, i in enumerate(idx)}
        br_idx = np.flatnonzero(alive & np.isin(arr.from_idx, idx))
        fl = [local[i] for i in arr.from_idx[br_idx]]
        tl = [local[i] for i in arr.to_idx[br_idx]]
        inj = g - s
        # remove float residue so the island balances exactly at the slack
        slack_local = local[case.bus_index[isl.slack_bus]]
        inj[slack_local] -= math.fsum(inj)
        theta, _ = solve_dc(idx.size, fl, tl, arr.reactance[br_idx], inj / case.base_mva, slack_local)
        angles[idx] = theta
        flow[br_idx] = (theta[fl] - theta[tl]) / arr.reactance[br_idx] * case.base_mva
    over = tuple(int(case.branches[i].id) for i in np.flatnonzero(np.abs(np.nan_to_num(flow)) > arr.rating + 1e-9))
    if over:
        log.debug("overloaded branches (not enforced): %s", over)
    return DispatchResult(arr.bus_ids, served, arr.load - served, gen, flow, angles,
                          tuple(islands), fractions, over)
