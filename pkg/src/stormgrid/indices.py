"""Percentile-rank vulnerability indices.

percentile rank of x among N values = (average rank of x - 1) / (N - 1),
with a lone value ranked 0.5. Missing values (``None`` or NaN) pass
through as ``None`` and do not count towards N.
"""

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Optional, Sequence

import numpy as np
from scipy.stats import rankdata

from .errors import ParseError, ValidationError

SVI_COLUMNS = ("county_fips", "s1", "s2", "s3", "s4")


def _is_missing(v) -> bool:
    return v is None or (isinstance(v, float) and math.isnan(v))


def percentile_rank(values: Sequence[Optional[float]]) -> list:
    present = [i for i, v in enumerate(values) if not _is_missing(v)]
    if not present:
        raise ValueError("percentile_rank needs at least one non-missing value")
    out = [None] * len(values)
    n = len(present)
    if n == 1:
        out[present[0]] = 0.5
        return out
    ranks = rankdata([float(values[i]) for i in present], method="average")
    for i, r in zip(present, ranks):
        out[i] = float((r - 1.0) / (n - 1))
    return out


def rank_table(values: Mapping[str, Optional[float]]) -> dict:
    """percentile_rank over a keyed table, keys kept in sorted order."""
    keys = sorted(values, key=str)
    return dict(zip(keys, percentile_rank([values[k] for k in keys])))


def minmax(values: np.ndarray) -> np.ndarray:
    values = np.asarray(values, float)
    lo, hi = values.min(), values.max()
    if hi == lo:
        return np.zeros_like(values)
    return (values - lo) / (hi - lo)


@dataclass(frozen=True)
class SviRecord:
    county_fips: str
    theme_sums: tuple

    def __post_init__(self):
        object.__setattr__(self, "theme_sums", tuple(float(v) for v in self.theme_sums))
        if len(self.theme_sums) != 4:
            raise ValidationError(f"county {self.county_fips}: expected 4 SVI themes, "
                                  f"got {len(self.theme_sums)}")
        if not all(math.isfinite(v) for v in self.theme_sums):
            raise ValidationError(f"county {self.county_fips}: non-finite SVI theme value")

    @property
    def total(self) -> float:
        return math.fsum(self.theme_sums)


def parse_svi(source) -> list:
    """Read ``county_fips,s1,s2,s3,s4`` rows."""
    if isinstance(source, (str, Path)):
        with open(source, newline="", encoding="utf-8") as fh:
            return parse_svi(fh)
    reader = csv.reader(source)
    try:
        header = [h.strip() for h in next(reader)]
    except StopIteration:
        raise ParseError("SVI file is empty") from None
    if tuple(header) != SVI_COLUMNS:
        raise ParseError(f"SVI header must be {','.join(SVI_COLUMNS)}, got {','.join(header)}")
    records, seen = [], set()
    for row in reader:
        if not row or all(not c.strip() for c in row):
            continue
        fips = row[0].strip()
        try:
            rec = SviRecord(fips, tuple(float(c) for c in row[1:]))
        except ValueError as exc:
            raise ParseError(f"line {reader.line_num}: {exc}") from None
        if fips in seen:
            raise ParseError(f"line {reader.line_num}: duplicate county {fips}")
        seen.add(fips)
        records.append(rec)
    return records


@dataclass(frozen=True)
class ComponentIndices:
    bvi: dict
    ssvi: dict
    branch_raw: dict
    substation_raw: dict


def component_vulnerability(branch_step_probs: Sequence[Mapping], substation_basin_probs: Sequence[Mapping]) -> ComponentIndices:
    """BVI and SSVI from per-storm outage probabilities.

    ``branch_step_probs[s][branch]`` is the sequence of per-step wind outage
    probabilities of a branch in storm ``s``; the raw value is the mean over
    storms of their maxima. ``substation_basin_probs[s][sub]`` holds one
    flood outage probability per basin; the raw value is the mean over
    storms of the basin average.
    """
    if not branch_step_probs and not substation_basin_probs:
        raise ValueError("need at least one evaluated storm")

    def mean_over_storms(per_storm, reduce):
        ids = sorted({k for storm in per_storm for k in storm}, key=str)
        return {k: math.fsum(reduce(storm[k]) if k in storm else 0.0 for storm in per_storm)
                / len(per_storm) for k in ids}

    branch_raw = mean_over_storms(branch_step_probs, lambda v: float(np.max(v)) if len(v) else 0.0)
    sub_raw = mean_over_storms(substation_basin_probs, lambda v: float(np.mean(v)) if len(v) else 0.0)
    return ComponentIndices(
        bvi=rank_table(branch_raw) if branch_raw else {},
        ssvi=rank_table(sub_raw) if sub_raw else {},
        branch_raw=branch_raw,
        substation_raw=sub_raw,
    )


def ovi(expected_norm_loss: Mapping[str, Optional[float]]) -> dict:
    """Outage vulnerability index: percentile rank of expected normalised loss."""
    return rank_table(expected_norm_loss)


def svi(records: Sequence[SviRecord]) -> dict:
    """Social vulnerability index: percentile rank of the summed theme values."""
    if not records:
        raise ValueError("no SVI records")
    return rank_table({r.county_fips: r.total for r in records})


def icvi(records: Sequence[SviRecord], expected_norm_loss: Mapping[str, Optional[float]]) -> dict:
    """Integrated index over counties having both SVI themes and outage data.

    Ranks min-max(theme sum) + min-max(expected normalised loss). Counties
    lacking either input are returned as ``None``.
    """
    themes = {r.county_fips: r.total for r in records}
    losses = {c: v for c, v in expected_norm_loss.items() if not _is_missing(v)}
    common = sorted(set(themes) & set(losses))
    if not common:
        raise ValidationError("SVI and outage tables share no counties")
    score = minmax([themes[c] for c in common]) + minmax([losses[c] for c in common])
    # sums like 0.1 + 0.6 vs 0.3 + 0.4 must tie
    score = np.round(score, 12)
    ranked = dict(zip(common, percentile_rank(list(score))))
    everyone = sorted(set(themes) | set(expected_norm_loss))
    return {c: ranked.get(c) for c in everyone}
