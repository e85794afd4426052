"""End-to-end study pipeline behind the CLI subcommands.

simulate: tracks -> imputation -> boundary filter -> per-storm hazard ->
Monte Carlo outages -> island balancing -> county losses -> CSV files.
indices:  simulate outputs + SVI -> BVI, SSVI, OVI, SVI, ICVI CSVs + GeoJSON.

Every output file is first written under a staging directory and moved into
place only after all of a stage's files were produced.
"""

import csv
import io
import json
import logging
import math
import os
import shutil
import tempfile
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__
from .config import RunConfig
from .errors import ConfigError, StormgridError, ValidationError
from .grid import GridCase, parse_grid_case
from .hurricane import filter_by_boundary, impute_missing_radii, parse_tracks
from .impact import CountyMapper, county_demand, expected_normalized_loss
from .indices import component_vulnerability, icvi, ovi, parse_svi, svi
from .powerflow import evaluate_outage_step
from .scenario import StormHazard, build_hazard, sample_scenario
from .surge import parse_surge_grids

log = logging.getLogger(__name__)

SIMULATE_FILES = ("county_impact.csv", "county_summary.csv", "storm_summary.csv",
                  "branch_exposure.csv", "substation_exposure.csv")


def fmt(v) -> str:
    """Exact, locale-free CSV number; empty for missing."""
    if v is None or (isinstance(v, float) and math.isnan(v)):
        return ""
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


def _csv(rows, header) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def _publish(out_dir: Path, files: dict) -> None:
    """Write ``{relative name: text}`` to a staging dir, then move into ``out_dir``."""
    out_dir.mkdir(parents=True, exist_ok=True)
    stage = Path(tempfile.mkdtemp(prefix=".staging-", dir=out_dir))
    try:
        for name, text in files.items():
            target = stage / name
            target.parent.mkdir(parents=True, exist_ok=True)
            target.write_text(text, encoding="utf-8")
        for name in files:
            dest = out_dir / name
            dest.parent.mkdir(parents=True, exist_ok=True)
            os.replace(stage / name, dest)
    finally:
        shutil.rmtree(stage, ignore_errors=True)


# -- inputs -------------------------------------------------------------------------

@dataclass
class StudyInputs:
    tracks: list
    case: GridCase
    surge_grids: list
    svi_records: list
    dropped_storms: list


def load_inputs(cfg: RunConfig) -> StudyInputs:
    missing = cfg.missing_paths()
    if missing:
        raise ConfigError("input files not found: " + "; ".join(missing))
    # impute over the whole archive so the boundary test sees every wind radius
    all_tracks = impute_missing_radii(parse_tracks(cfg.path("tracks")),
                                      cfg.imputation_seed, cfg.imputation_method)
    tracks = filter_by_boundary(all_tracks, cfg.boundary)
    kept = {t.storm_id for t in tracks}
    dropped = [t.storm_id for t in all_tracks if t.storm_id not in kept]
    case = parse_grid_case(cfg.path("grid_case"), tuple(cfg.wind_table.thresholds))
    missing_kv = cfg.wind_table.covers(br.voltage_kv for br in case.lines)
    if missing_kv:
        raise ConfigError(f"wind fragility table lacks voltage classes {missing_kv}")
    grids = parse_surge_grids(cfg.path("surge")) if cfg.path("surge") else []
    records = parse_svi(cfg.path("svi"))
    return StudyInputs(tracks, case, grids, records, dropped)


def hazards_for(cfg: RunConfig, inputs: StudyInputs) -> list:
    out = []
    for t in inputs.tracks:
        out.append(build_hazard(
            t, inputs.case, inputs.surge_grids, cfg.wind_table, cfg.flood, cfg.profile,
            basins=cfg.basins, land=cfg.land, spacing_km=cfg.spacing_km,
            activation_window_h=cfg.activation_window_h, tide=cfg.tide,
            surge_override=cfg.surge_overrides.get(t.storm_id)))
    return out


# -- Monte Carlo ---------------------------------------------------------------------

@dataclass
class StormLosses:
    """Per-sample losses of one storm, samples in seed order."""

    storm_id: str
    county_peaks: np.ndarray   # (samples, counties)
    system_peaks: np.ndarray   # (samples,)
    county_steps: np.ndarray   # (samples, steps, counties)


class LossEvaluator:
    """Scenario -> county losses, memoising the dispatch of each outage set."""

    def __init__(self, case: GridCase, mapper: CountyMapper):
        self.case = case
        self.mapper = mapper
        self.ids = np.array([br.id for br in case.branches])
        self._cache = {}

    def shed(self, failed_idx: tuple) -> np.ndarray:
        hit = self._cache.get(failed_idx)
        if hit is None:
            # flows do not change shed (ratings are not enforced), so skip the solve
            hit = evaluate_outage_step(self.case, self.ids[list(failed_idx)], solve_flows=False).shed
            self._cache[failed_idx] = hit
        return hit

    def losses(self, hazard: StormHazard, seed: int):
        scn = sample_scenario(hazard, seed)
        total = scn.total_step
        shed = np.empty((hazard.n_steps, len(self.case.buses)))
        for t in range(hazard.n_steps):
            shed[t] = self.shed(tuple(np.flatnonzero(total <= t).tolist()))
        county = self.mapper.aggregate(shed)
        return county.max(axis=0), float(shed.sum(axis=1).max()), county


_WORKER = {}


def _init_worker(case, hazards):
    _WORKER["eval"] = LossEvaluator(case, CountyMapper(case))
    _WORKER["hazards"] = hazards


def _run_chunk(args):
    storm_idx, seeds = args
    ev, hz = _WORKER["eval"], _WORKER["hazards"][storm_idx]
    return [ev.losses(hz, s) for s in seeds]


def simulate_losses(case: GridCase, hazards, n_samples: int, base_seed: int,
                    workers: int = 1) -> list:
    """Monte Carlo losses for every storm; identical for any worker count."""
    seeds = [base_seed + k for k in range(n_samples)]
    jobs = []
    chunk = max(1, math.ceil(n_samples / (4 * workers)))
    for i in range(len(hazards)):
        jobs.extend((i, seeds[a:a + chunk]) for a in range(0, n_samples, chunk))
    if workers == 1:
        _init_worker(case, hazards)
        results = [_run_chunk(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=workers, initializer=_init_worker,
                                 initargs=(case, hazards)) as pool:
            results = list(pool.map(_run_chunk, jobs))
    per_storm = [[] for _ in hazards]
    for (i, _), res in zip(jobs, results):
        per_storm[i].extend(res)
    out = []
    for hz, res in zip(hazards, per_storm):
        out.append(StormLosses(hz.storm_id,
                               np.array([r[0] for r in res]),
                               np.array([r[1] for r in res]),
                               np.array([r[2] for r in res])))
    return out


# -- simulate ------------------------------------------------------------------------

def run_simulate(cfg: RunConfig) -> dict:
    """Run the study and write simulation artefacts. Returns the manifest."""
    started = time.perf_counter()
    inputs = load_inputs(cfg)
    case = inputs.case
    if not inputs.tracks:
        raise ValidationError("no storm affects the boundary region")
    hazards = hazards_for(cfg, inputs)
    losses = simulate_losses(case, hazards, cfg.n_samples, cfg.base_seed, cfg.workers)

    mapper = CountyMapper(case)
    demand = county_demand(case)
    peaks = {sl.storm_id: {c: sl.county_peaks[:, i] for i, c in enumerate(mapper.counties)}
             for sl in losses}
    expected, excluded = expected_normalized_loss(peaks, demand)
    if excluded:
        log.warning("counties with no mapped demand (index left empty): %s", ", ".join(excluded))

    files = {}
    impact_rows = []
    for sl in losses:
        for i, c in enumerate(mapper.counties):
            mean_peak = float(sl.county_peaks[:, i].mean())
            norm = mean_peak / demand[c] if demand[c] > 0 else None
            impact_rows.append([c, fmt(demand[c]), sl.storm_id, fmt(mean_peak), fmt(norm)])
    files["county_impact.csv"] = _csv(impact_rows, ["county_fips", "demand_mw", "storm_id",
                                                    "peak_loss_mw", "norm_loss"])
    files["county_summary.csv"] = _csv(
        [[c, fmt(demand[c]), fmt(expected.get(c))] for c in mapper.counties],
        ["county_fips", "demand_mw", "expected_norm_loss"])

    storm_rows = []
    for t, hz, sl in zip(inputs.tracks, hazards, losses):
        mean_steps = sl.county_steps.mean(axis=0)
        rows = [[k, hz.times[k].strftime("%Y-%m-%dT%H:%M:%SZ"), c, fmt(mean_steps[k, i])]
                for k in range(hz.n_steps) for i, c in enumerate(mapper.counties)]
        files[f"storms/{t.storm_id}_loss.csv"] = _csv(rows, ["step", "time", "county_fips",
                                                             "mean_loss_mw"])
        storm_rows.append([t.storm_id, t.name, t.max_category,
                           hz.landfall_time.strftime("%Y-%m-%dT%H:%M:%SZ")
                           if hz.landfall_time else "",
                           ";".join(sorted(hz.surge_keys)), len(sl.system_peaks),
                           fmt(float(sl.system_peaks.mean()))])
    files["storm_summary.csv"] = _csv(storm_rows, ["storm_id", "name", "max_category",
                                                   "landfall_time", "surge_basins", "n_samples",
                                                   "mean_peak_system_loss_mw"])

    branch_rows = []
    for hz in hazards:
        gmax = hz.branch_gamma.max(axis=0)
        pmax = hz.branch_prob.max(axis=0)
        for j, br in enumerate(case.branches):
            if br.kind == "line":
                branch_rows.append([hz.storm_id, br.id, fmt(br.voltage_kv), fmt(gmax[j]), fmt(pmax[j])])
    files["branch_exposure.csv"] = _csv(branch_rows, ["storm_id", "branch_id", "voltage_kv",
                                                      "max_wind_ms", "max_outage_prob"])
    sub_rows = []
    basin_names = [b.name for b in cfg.basins]
    for hz in hazards:
        for i, sid in enumerate(hz.substation_ids):
            for k, name in enumerate(basin_names):
                sub_rows.append([hz.storm_id, sid, name, fmt(hz.basin_substation_prob[k, i])])
            if not basin_names:
                sub_rows.append([hz.storm_id, sid, "", fmt(0.0)])
    files["substation_exposure.csv"] = _csv(sub_rows, ["storm_id", "substation_id", "basin",
                                                       "outage_prob"])

    manifest = {
        "tool": "stormgrid",
        "version": __version__,
        "config": str(cfg.source),
        "config_sha256": cfg.digest,
        "base_seed": cfg.base_seed,
        "n_samples": cfg.n_samples,
        "workers": cfg.workers,
        "storms": [{"storm_id": t.storm_id, "name": t.name, "max_category": t.max_category,
                    "surge_basins": sorted(hz.surge_keys), "samples": cfg.n_samples}
                   for t, hz in zip(inputs.tracks, hazards)],
        "storms_outside_boundary": inputs.dropped_storms,
        "counties_without_demand": excluded,
        "wall_clock_s": round(time.perf_counter() - started, 3),
    }
    files["manifest.json"] = json.dumps(manifest, indent=2) + "\n"
    _publish(cfg.output_dir, files)
    return manifest


# -- indices ----------------------------------------------------------------------------

def _read_csv(path: Path) -> list:
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def _num(text: str):
    return None if text == "" else float(text)


def run_indices(cfg: RunConfig) -> dict:
    """Compute all indices from a finished simulate run; returns the county table."""
    out = cfg.output_dir
    absent = [n for n in SIMULATE_FILES if not (out / n).exists()]
    if absent:
        raise ConfigError(f"simulation outputs missing in {out}: {', '.join(absent)}; "
                          f"run `stormgrid simulate` first")
    if not cfg.path("svi") or not cfg.path("svi").exists():
        raise ConfigError(f"SVI file not found: {cfg.path('svi')}")

    summary = _read_csv(out / "county_summary.csv")
    expected = {r["county_fips"]: _num(r["expected_norm_loss"]) for r in summary}
    records = parse_svi(cfg.path("svi"))

    branch_per_storm, sub_per_storm = {}, {}
    for r in _read_csv(out / "branch_exposure.csv"):
        branch_per_storm.setdefault(r["storm_id"], {})[r["branch_id"]] = [float(r["max_outage_prob"])]
    for r in _read_csv(out / "substation_exposure.csv"):
        sub_per_storm.setdefault(r["storm_id"], {}).setdefault(r["substation_id"], []).append(
            float(r["outage_prob"]))
    comp = component_vulnerability(list(branch_per_storm.values()), list(sub_per_storm.values()))

    has_loss = {c: v for c, v in expected.items() if v is not None}
    ovi_t = ovi(expected) if has_loss else {c: None for c in expected}
    svi_t = svi(records)
    icvi_t = icvi(records, expected)
    counties = sorted(set(ovi_t) | set(svi_t) | set(icvi_t))
    table = {c: {"ovi": ovi_t.get(c), "svi": svi_t.get(c), "icvi": icvi_t.get(c)} for c in counties}

    files = {
        "indices.csv": _csv([[c, fmt(v["ovi"]), fmt(v["svi"]), fmt(v["icvi"])] for c, v in table.items()],
                            ["county_fips", "ovi", "svi", "icvi"]),
        "bvi.csv": _csv([[b, fmt(v)] for b, v in sorted(comp.bvi.items(), key=lambda kv: int(kv[0]))],
                        ["branch_id", "bvi"]),
        "ssvi.csv": _csv([[s, fmt(v)] for s, v in comp.ssvi.items()], ["substation_id", "ssvi"]),
    }
    geo_path = cfg.path("county_geometry")
    if geo_path is not None:
        files["indices.geojson"] = json.dumps(
            choropleth(geo_path, table, cfg.county_id_property), indent=1) + "\n"
    else:
        log.warning("no county_geometry configured; GeoJSON not written")
    _publish(out, files)
    return table


def choropleth(geo_path: Path, table: dict, id_property: str) -> dict:
    """County FeatureCollection carrying ovi/svi/icvi for counties in ``table``."""
    with open(geo_path, encoding="utf-8") as fh:
        src = json.load(fh)
    if src.get("type") != "FeatureCollection":
        raise ValidationError(f"{geo_path} is not a GeoJSON FeatureCollection")
    features = []
    seen = set()
    for f in src.get("features", []):
        fips = str((f.get("properties") or {}).get(id_property, ""))
        if fips not in table or fips in seen:
            continue
        seen.add(fips)
        features.append({"type": "Feature", "geometry": f.get("geometry"),
                         "properties": {"county_fips": fips, **table[fips]}})
    no_geom = sorted(set(table) - seen)
    if no_geom:
        log.warning("counties without geometry: %s", ", ".join(no_geom))
    features.sort(key=lambda f: f["properties"]["county_fips"])
    return {"type": "FeatureCollection", "features": features}


# -- validate ----------------------------------------------------------------------------

def run_validate(cfg: RunConfig) -> tuple:
    """Check every input; returns ``(problems, counts)`` without raising."""
    problems, counts = [], {}
    missing = cfg.missing_paths()
    problems.extend(f"file not found: {m}" for m in missing)
    absent = {m.split(":", 1)[0] for m in missing}

    def attempt(name, fn):
        if name in absent or cfg.path(name) is None:
            return None
        try:
            return fn(cfg.path(name))
        except StormgridError as exc:
            problems.append(f"{name}: {exc}")
        except (OSError, ValueError) as exc:
            problems.append(f"{name}: {exc}")
        return None

    tracks = attempt("tracks", parse_tracks)
    if tracks is not None:
        counts["storms"] = len(tracks)
        counts["storms_in_boundary"] = len(filter_by_boundary(tracks, cfg.boundary))
    case = attempt("grid_case", lambda p: parse_grid_case(p, tuple(cfg.wind_table.thresholds)))
    if case is not None:
        counts.update(buses=len(case.buses), branches=len(case.branches),
                      substations=len(case.substations), lines=case.line_corridors(),
                      line_circuits=len(case.lines),
                      total_load_gw=round(case.total_load_mw / 1000.0, 4),
                      total_capacity_gw=round(case.total_capacity_mw / 1000.0, 4),
                      counties=len(case.counties()))
        missing_kv = cfg.wind_table.covers(br.voltage_kv for br in case.lines)
        if missing_kv:
            problems.append(f"grid_case: wind fragility table lacks voltage classes {missing_kv}")
    grids = attempt("surge", parse_surge_grids)
    if grids is not None:
        counts["surge_grids"] = len(grids)
    records = attempt("svi", parse_svi)
    if records is not None:
        counts["svi_counties"] = len(records)
    return problems, counts
