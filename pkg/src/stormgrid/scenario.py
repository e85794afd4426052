"""Monte Carlo outage scenarios for one storm.

Hazard evaluation is split from sampling. :func:`build_hazard` computes,
once per storm, the per-step wind outage probability of every line and the
flood outage probability of every substation. :func:`sample_scenario` then
turns a seed into one absorbing outage timeline.

Random streams: sample ``k`` of a run uses seed ``base_seed + k``. Within a
sample, line uniforms come from ``SeedSequence([seed, 0])`` laid out as a
(step, branch) matrix in case order, substation uniforms from
``SeedSequence([seed, 1])`` in case order. Results therefore do not depend on
evaluation order or on how samples are split across workers.
"""

import logging
from dataclasses import dataclass, field
from datetime import datetime, timedelta
from typing import Optional, Sequence

import numpy as np
import shapely

from .errors import NotFoundError
from .fragility import FloodFragilityParams, WindFragilityTable, line_outage_prob, substation_outage_prob
from .geo import BoundingBox
from .grid import GridCase
from .hurricane import HurricaneTrack, WindProfile, wind_at_arrays
from .surge import Basin, SurgeGrid, SurgeKey, assign_basin, inundation_at, select_meow, surge_key_for_track

log = logging.getLogger(__name__)

NEVER = np.iinfo(np.int64).max
DEFAULT_ACTIVATION_WINDOW_H = 6.0


@dataclass(frozen=True)
class SurgeActivation:
    landfall_time: datetime
    active_from: datetime

    def __post_init__(self):
        if not self.active_from < self.landfall_time:
            raise ValueError("surge activation must precede landfall")


def _land_contains(land, p) -> bool:
    if isinstance(land, BoundingBox):
        return land.contains(p)
    if isinstance(land, Basin):
        return land.contains(p)
    return bool(land.covers(shapely.Point(p.lon, p.lat)))


def detect_landfall_index(track: HurricaneTrack, land) -> Optional[int]:
    for i, p in enumerate(track.points):
        if _land_contains(land, p.eye):
            return i
    return None


def detect_landfall(track: HurricaneTrack, land) -> Optional[datetime]:
    """Time of the first track point whose eye lies on ``land``.

    ``land`` is a :class:`BoundingBox`, a :class:`Basin` or a shapely
    geometry in (lon, lat) order.
    """
    i = detect_landfall_index(track, land)
    return None if i is None else track.points[i].timestamp


def landward_half(box: BoundingBox, side: str = "north") -> BoundingBox:
    """Half of ``box`` on the given side; the default land region for landfall."""
    mid_lat = 0.5 * (box.min_lat + box.max_lat)
    mid_lon = 0.5 * (box.min_lon + box.max_lon)
    halves = {
        "north": BoundingBox(mid_lat, box.max_lat, box.min_lon, box.max_lon),
        "south": BoundingBox(box.min_lat, mid_lat, box.min_lon, box.max_lon),
        "east": BoundingBox(box.min_lat, box.max_lat, mid_lon, box.max_lon),
        "west": BoundingBox(box.min_lat, box.max_lat, box.min_lon, mid_lon),
    }
    try:
        return halves[side]
    except KeyError:
        raise ValueError(f"landward side must be one of {sorted(halves)}") from None


@dataclass(frozen=True, eq=False)
class StormHazard:
    """Per-storm outage probabilities, ready for repeated sampling.

    ``branch_prob[t, j]`` is the wind outage probability of ``branch_ids[j]``
    at step ``t`` (zero for transformers). ``substation_prob[i]`` is the flood
    outage probability of ``substation_ids[i]`` from its own basin's grid.
    ``basin_substation_prob[b, i]`` is the same quantity evaluated with
    basin ``basins[b]``'s grid (zero where that basin has no grid).
    """

    storm_id: str
    times: tuple
    branch_ids: tuple
    branch_gamma: np.ndarray
    branch_prob: np.ndarray
    substation_ids: tuple
    substation_depth: np.ndarray
    substation_prob: np.ndarray
    substation_branches: tuple
    basins: tuple = ()
    basin_substation_prob: np.ndarray = field(default_factory=lambda: np.zeros((0, 0)))
    activation: Optional[SurgeActivation] = None
    activation_step: Optional[int] = None
    surge_keys: dict = field(default_factory=dict)
    landfall_time: Optional[datetime] = None

    @property
    def n_steps(self) -> int:
        return len(self.times)

    @property
    def has_surge(self) -> bool:
        return bool(self.surge_keys)


def substation_branch_index(case: GridCase) -> tuple:
    """For each substation (case order), indices of its incident branches."""
    sub_of_bus = {b.id: b.substation_id for b in case.buses}
    incident = {s.id: [] for s in case.substations}
    for j, br in enumerate(case.branches):
        a, b = sub_of_bus[br.from_bus], sub_of_bus[br.to_bus]
        incident[a].append(j)
        if b != a:
            incident[b].append(j)
    return tuple(np.array(incident[s.id], dtype=np.int64) for s in case.substations)


def branch_gamma_matrix(track: HurricaneTrack, case: GridCase, profile: WindProfile,
                        spacing_km: float = 1.0) -> np.ndarray:
    """Max wind (m/s) on every branch at every track step, shape (steps, branches)."""
    samples = [case.branch_sample_points(br, spacing_km) for br in case.branches]
    counts = np.array([lat.size for lat, _ in samples])
    lat = np.concatenate([s[0] for s in samples]) if samples else np.zeros(0)
    lon = np.concatenate([s[1] for s in samples]) if samples else np.zeros(0)
    starts = np.concatenate([[0], np.cumsum(counts)[:-1]]).astype(np.int64)
    out = np.zeros((len(track.points), len(case.branches)))
    for t, tp in enumerate(track.points):
        if samples:
            out[t] = np.maximum.reduceat(wind_at_arrays(lat, lon, tp, profile), starts)
    return out


def build_hazard(track: HurricaneTrack, case: GridCase, surge_grids: Sequence[SurgeGrid],
                 wind_table: WindFragilityTable, flood: FloodFragilityParams,
                 profile: WindProfile, *, basins: Sequence[Basin] = (), land=None,
                 spacing_km: float = 1.0, activation_window_h: float = DEFAULT_ACTIVATION_WINDOW_H,
                 tide: str = "mean", surge_override: Optional[dict] = None) -> StormHazard:
    """Evaluate wind and flood outage probabilities of one storm over the grid.

    Surge applies only when the storm makes landfall on ``land`` and a grid
    is found for its category; ``surge_override`` ({basin: SurgeKey} or a
    single key applied to every basin) replaces the key derived from the track.
    """
    gamma = branch_gamma_matrix(track, case, profile, spacing_km)
    prob = np.zeros_like(gamma)
    for j, br in enumerate(case.branches):
        if br.kind == "line":
            prob[:, j] = line_outage_prob(gamma[:, j], br.voltage_kv, wind_table)

    n_sub = len(case.substations)
    depth = np.zeros(n_sub)
    sub_prob = np.zeros(n_sub)
    basin_prob = np.zeros((len(basins), n_sub))
    activation = None
    activation_step = None
    keys = {}

    landfall_idx = detect_landfall_index(track, land) if land is not None else None
    if landfall_idx is not None and basins:
        landfall = track.points[landfall_idx].timestamp
        active_from = landfall - timedelta(hours=activation_window_h)
        grids = {}
        for b in basins:
            if isinstance(surge_override, SurgeKey):
                key = SurgeKey(b.name, surge_override.category, surge_override.direction,
                               surge_override.speed_mph, surge_override.tide)
            elif surge_override and b.name in surge_override:
                key = surge_override[b.name]
            else:
                key = surge_key_for_track(track, landfall_idx, b.name, tide)
            if key is None:
                continue
            try:
                grids[b.name] = select_meow(surge_grids, key)
                keys[b.name] = grids[b.name].key
            except NotFoundError as exc:
                log.info("storm %s: %s; wind-only in basin %s", track.storm_id, exc, b.name)
        if grids:
            activation = SurgeActivation(landfall, active_from)
            activation_step = next(t for t, p in enumerate(track.points) if p.timestamp >= active_from)
            for i, sub in enumerate(case.substations):
                for k, b in enumerate(basins):
                    if b.name in grids:
                        d = inundation_at(sub, grids[b.name]).depth
                        basin_prob[k, i] = substation_outage_prob(d, flood)
                home = assign_basin(sub.location, basins)
                if home is not None and home.name in grids:
                    depth[i] = inundation_at(sub, grids[home.name]).depth
                    sub_prob[i] = substation_outage_prob(depth[i], flood)

    return StormHazard(
        storm_id=track.storm_id,
        times=tuple(track.times),
        branch_ids=tuple(br.id for br in case.branches),
        branch_gamma=gamma,
        branch_prob=prob,
        substation_ids=tuple(s.id for s in case.substations),
        substation_depth=depth,
        substation_prob=sub_prob,
        substation_branches=substation_branch_index(case),
        basins=tuple(b.name for b in basins),
        basin_substation_prob=basin_prob,
        activation=activation,
        activation_step=activation_step,
        surge_keys=keys,
        landfall_time=track.points[landfall_idx].timestamp if landfall_idx is not None else None,
    )


@dataclass(frozen=True, eq=False)
class OutageScenario:
    """One sampled timeline. Arrays hold the step at which each component
    fails (``NEVER`` if it survives); failures persist to the end of the storm."""

    storm_id: str
    seed: int
    times: tuple
    branch_ids: tuple
    substation_ids: tuple
    wind_step: np.ndarray
    flood_step: np.ndarray
    substation_step: np.ndarray

    @property
    def total_step(self) -> np.ndarray:
        return np.minimum(self.wind_step, self.flood_step)

    def _ids(self, ids, steps, t) -> frozenset:
        return frozenset(ids[j] for j in np.flatnonzero(steps <= t))

    def failed_branches_wind(self, t: int) -> frozenset:
        return self._ids(self.branch_ids, self.wind_step, t)

    def failed_branches_flood(self, t: int) -> frozenset:
        return self._ids(self.branch_ids, self.flood_step, t)

    def failed_branches_total(self, t: int) -> frozenset:
        return self._ids(self.branch_ids, self.total_step, t)

    def failed_substations(self, t: int) -> frozenset:
        return self._ids(self.substation_ids, self.substation_step, t)

    def __eq__(self, other):
        if not isinstance(other, OutageScenario):
            return NotImplemented
        return (self.storm_id, self.seed, self.times) == (other.storm_id, other.seed, other.times) \
            and all(np.array_equal(getattr(self, f), getattr(other, f))
                    for f in ("wind_step", "flood_step", "substation_step"))


def _first_true(mask: np.ndarray) -> np.ndarray:
    """Row index of the first True per column, NEVER where a column has none."""
    hit = mask.any(axis=0)
    first = mask.argmax(axis=0).astype(np.int64)
    first[~hit] = NEVER
    return first


def sample_scenario(hazard: StormHazard, seed: int) -> OutageScenario:
    """Draw one outage timeline for ``hazard``.

    Each surviving line fails at step t with probability ``branch_prob[t]``.
    Substations are tried once, at the surge activation step, against their
    flood probability; a failed substation takes all incident branches out
    from that step on.
    """
    n_steps, n_br = hazard.branch_prob.shape
    u_br = np.random.default_rng(np.random.SeedSequence([seed, 0])).random((n_steps, n_br))
    wind_first = _first_true(u_br < hazard.branch_prob)

    n_sub = len(hazard.substation_ids)
    sub_step = np.full(n_sub, NEVER, dtype=np.int64)
    flood_step = np.full(n_br, NEVER, dtype=np.int64)
    if hazard.activation_step is not None and n_sub:
        u_sub = np.random.default_rng(np.random.SeedSequence([seed, 1])).random(n_sub)
        failed = u_sub < hazard.substation_prob
        sub_step[failed] = hazard.activation_step
        for i in np.flatnonzero(failed):
            flood_step[hazard.substation_branches[i]] = hazard.activation_step

    # a branch already out through flooding is no longer at risk from wind
    wind_step = np.where(wind_first <= flood_step, wind_first, NEVER)
    return OutageScenario(hazard.storm_id, seed, hazard.times, hazard.branch_ids,
                          hazard.substation_ids, wind_step, flood_step, sub_step)


def run_monte_carlo(hazard: StormHazard, n_samples: int, base_seed: int = 0) -> list:
    """``n_samples`` scenarios; sample ``k`` uses seed ``base_seed + k``."""
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    return [sample_scenario(hazard, base_seed + k) for k in range(n_samples)]
