"""Matching fine (polar-orbiter) scenes to the closest coarse (geostationary) scene."""

from __future__ import annotations

import bisect
from dataclasses import dataclass
from datetime import datetime, timedelta
from typing import Optional, Sequence

import numpy as np

from thermocast.errors import ConfigurationError
from thermocast.geogrid.grid import Grid, format_time
from thermocast.geogrid.qc import coverage_fraction
from thermocast.geogrid.solar import solar_zenith_grid

MAX_GAP = timedelta(minutes=15)
MIN_FINE_COVERAGE = 0.5
MIN_COARSE_COVERAGE = 0.8
MIN_OVERLAP = 0.7
# Coverage ratios are count quotients; absorb representation error at the threshold.
_EPS = 1e-12


@dataclass
class ScenePair:
    coarse: Grid
    sza: Grid
    fine: Grid
    city_id: str
    time_gap_minutes: float
    coarse_coverage: float
    fine_coverage: float
    overlap_fraction: float

    @property
    def time_utc(self) -> datetime:
        return self.fine.time_utc

    @property
    def sample_id(self) -> str:
        return f"{self.city_id}@{format_time(self.fine.time_utc)}"


@dataclass
class PairAttempt:
    """Outcome of :func:`pair_scenes`; ``pair`` is None when rejected."""

    pair: Optional[ScenePair]
    reason: Optional[str]
    coarse: Optional[Grid] = None
    time_gap_minutes: Optional[float] = None
    fine_coverage: Optional[float] = None
    coarse_coverage: Optional[float] = None
    overlap_fraction: Optional[float] = None

    @property
    def accepted(self) -> bool:
        return self.pair is not None


def overlap_fraction(fine: Grid, coarse: Grid) -> float:
    """Share of the fine grid's valid cells that are also valid in the coarse grid."""
    fv = fine.valid
    n = np.count_nonzero(fv)
    if n == 0:
        return 0.0
    return float(np.count_nonzero(fv & coarse.valid)) / n


def closest_in_time(t: datetime, catalog: Sequence[Grid]) -> Optional[Grid]:
    """Temporally nearest catalog entry (earlier one on ties); catalog must be time-sorted."""
    if not catalog:
        return None
    times = [g.time_utc for g in catalog]
    i = bisect.bisect_left(times, t)
    best = None
    for j in (i - 1, i):
        if 0 <= j < len(catalog):
            gap = abs(times[j] - t)
            if best is None or gap < best[0]:
                best = (gap, j)
    return catalog[best[1]]


def pair_scenes(fine: Grid, coarse_catalog: Sequence[Grid],
                min_fine: float = MIN_FINE_COVERAGE,
                min_coarse: float = MIN_COARSE_COVERAGE,
                min_overlap: float = MIN_OVERLAP) -> PairAttempt:
    """Pair a fine scene with its closest coarse acquisition if all gates pass.

    The gates are inclusive: fine coverage >= 0.5, coarse coverage >= 0.8
    and overlap >= 0.7 of the fine valid set. The time gap must be strictly
    below 15 minutes.
    """
    coarse = closest_in_time(fine.time_utc, coarse_catalog)
    if coarse is None:
        return PairAttempt(None, "no_coarse_scene")
    if coarse.spec != fine.spec:
        raise ConfigurationError("coarse and fine grids must share one grid spec")
    gap = abs((coarse.time_utc - fine.time_utc).total_seconds()) / 60.0
    attempt = PairAttempt(None, None, coarse=coarse, time_gap_minutes=gap)
    if gap >= MAX_GAP.total_seconds() / 60.0:
        attempt.reason = "time_gap"
        return attempt

    attempt.fine_coverage = fc = coverage_fraction(fine)
    attempt.coarse_coverage = cc = coverage_fraction(coarse)
    attempt.overlap_fraction = ov = overlap_fraction(fine, coarse)
    if fc < min_fine - _EPS:
        attempt.reason = "fine_coverage"
    elif cc < min_coarse - _EPS:
        attempt.reason = "coarse_coverage"
    elif ov < min_overlap - _EPS:
        attempt.reason = "overlap"
    else:
        sza = Grid(fine.spec, "sza_deg", fine.time_utc, solar_zenith_grid(fine.spec, fine.time_utc),
                   city_id=fine.city_id, source="solar")
        attempt.pair = ScenePair(coarse=coarse, sza=sza, fine=fine, city_id=fine.city_id,
                                 time_gap_minutes=gap, coarse_coverage=cc,
                                 fine_coverage=fc, overlap_fraction=ov)
    return attempt
