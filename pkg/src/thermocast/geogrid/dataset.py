"""City balancing, year-based splitting and nowcast window assembly."""

from __future__ import annotations

import zlib
from collections import defaultdict
from dataclasses import dataclass, field
from datetime import date, datetime, timedelta
from typing import Iterable, Sequence

import numpy as np

from thermocast.errors import DataError, UsageError
from thermocast.geogrid.grid import Grid, format_time

TEST_YEARS = (2007, 2013, 2019, 2025)
LEAD_TIMES = (15, 30, 45, 60, 75)
CADENCE = timedelta(minutes=15)
N_INPUT_FRAMES = 3


def _stable_seed(seed: int, label: str) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, zlib.crc32(label.encode())]))


def balance_city_cap(pairs: Sequence, cap: int = 1500, seed: int = 0) -> list:
    """Keep at most ``cap`` items per ``city_id``.

    Oversized cities keep a uniform random subset drawn with a generator
    derived from ``seed`` and the city name; input order is preserved.
    """
    by_city: dict[str, list[int]] = defaultdict(list)
    for i, p in enumerate(pairs):
        by_city[p.city_id].append(i)
    keep: set[int] = set()
    for city, idx in by_city.items():
        if len(idx) <= cap:
            keep.update(idx)
            continue
        idx = sorted(idx, key=lambda i: pairs[i].sample_id)
        chosen = _stable_seed(seed, city).choice(len(idx), size=cap, replace=False)
        keep.update(idx[j] for j in chosen)
    return [p for i, p in enumerate(pairs) if i in keep]


@dataclass
class DatasetSplit:
    train: list = field(default_factory=list)
    validation: list = field(default_factory=list)
    test: list = field(default_factory=list)

    def role_of(self, sample_id: str) -> str:
        for role in ("train", "validation", "test"):
            if sample_id in getattr(self, role):
                return role
        raise KeyError(sample_id)


def split_by_year(samples: Iterable, val_fraction: float = 0.1, seed: int = 0,
                  test_years: Sequence[int] = TEST_YEARS) -> DatasetSplit:
    """Hold out whole test years, then split the rest by calendar day.

    ``samples`` need ``sample_id`` and ``time_utc`` attributes. Validation
    receives ``round(val_fraction * n_days)`` days (at least one when two or
    more days exist), picked by a seeded permutation of the sorted days.
    """
    if not 0.0 <= val_fraction < 1.0:
        raise UsageError("val_fraction must lie in [0, 1)")
    split = DatasetSplit()
    rest: list = []
    for s in samples:
        if s.time_utc.year in test_years:
            split.test.append(s.sample_id)
        else:
            rest.append(s)
    if not rest:
        raise DataError("no samples outside the test years")

    days = sorted({s.time_utc.date() for s in rest})
    n_val = int(round(val_fraction * len(days)))
    if val_fraction > 0 and len(days) >= 2:
        n_val = max(1, n_val)
    n_val = min(n_val, len(days) - 1)
    order = _stable_seed(seed, "validation-days").permutation(len(days))
    val_days: set[date] = {days[i] for i in order[:n_val]}
    for s in rest:
        (split.validation if s.time_utc.date() in val_days else split.train).append(s.sample_id)
    return split


@dataclass
class SequenceSample:
    """Three input frames 15 minutes apart plus the frame ``lead_minutes`` after the last."""

    frames: tuple[Grid, Grid, Grid]
    target: Grid
    lead_minutes: int

    @property
    def time_utc(self) -> datetime:
        return self.frames[-1].time_utc

    @property
    def city_id(self) -> str:
        return self.frames[-1].city_id

    @property
    def sample_id(self) -> str:
        return f"{self.city_id}@{format_time(self.time_utc)}+{self.lead_minutes}"


def _check_lead(lead_minutes: int) -> None:
    if lead_minutes not in LEAD_TIMES:
        raise UsageError(f"lead time must be one of {LEAD_TIMES}, got {lead_minutes}")


def sequence_windows(times: Sequence[datetime], lead_minutes: int) -> list[tuple[int, int, int, int]]:
    """Index quadruples (t-30, t-15, t, t+lead) into ``times`` where all four exist."""
    _check_lead(lead_minutes)
    pos = {t: i for i, t in enumerate(times)}
    lead = timedelta(minutes=lead_minutes)
    out = []
    for i, t in enumerate(times):
        a, b, tgt = pos.get(t - 2 * CADENCE), pos.get(t - CADENCE), pos.get(t + lead)
        if a is not None and b is not None and tgt is not None:
            out.append((a, b, i, tgt))
    return out


def build_sequences(frames: Sequence[Grid], lead_minutes: int) -> list[SequenceSample]:
    """Every complete 3-frame window with its target; gaps simply drop windows."""
    windows = sequence_windows([f.time_utc for f in frames], lead_minutes)
    return [SequenceSample((frames[a], frames[b], frames[c]), frames[t], lead_minutes)
            for a, b, c, t in windows]
