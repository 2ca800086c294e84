"""Seeded synthetic LST world: diurnal cycle, urban hotspot, AR(1) noise, gappy observations.

Truth lives on a fine grid at 15-minute cadence. Observations mimic the two
sensors: a coarse product every 15 minutes (block mean replicated over its
footprint, occasional missing blocks) and a fine product a few times per day
at jittered overpass times (truth with random per-pixel gaps).
"""

from __future__ import annotations

import zlib
from dataclasses import asdict, dataclass, field
from datetime import datetime, timedelta, timezone
from typing import Optional

import numpy as np

from thermocast.benchmarks import FrameHistory
from thermocast.errors import UsageError
from thermocast.geogrid import Grid, GridSpec, block_mean, replicate_blocks, solar_zenith_grid
from thermocast.geogrid.dataset import CADENCE

FRAMES_PER_DAY = 96


@dataclass(frozen=True)
class SynthConfig:
    seed: int = 0
    city_id: str = "synthburg"
    lat_center: float = 52.60
    lon_center: float = 13.30
    rows: int = 15
    cols: int = 15
    # total days, shared evenly across the listed years
    days: int = 60
    years: tuple[int, ...] = (2012, 2013)
    season_start: tuple[int, int] = (6, 1)
    base_c: float = 24.0
    amplitude_c: float = 8.0
    peak_solar_hour: float = 13.0
    hotspot_c: float = 6.0
    hotspot_sigma_cells: float = 3.0
    ar_coef: float = 0.95
    noise_sigma_c: float = 0.5
    fine_gap_prob: float = 0.1
    coarse_gap_prob: float = 0.02
    coarsening: int = 5
    overpass_solar_hours: tuple[float, ...] = (1.5, 10.5, 13.5, 22.5)
    overpass_jitter_min: float = 20.0
    utc_offset_hours: float = 2.0

    def __post_init__(self):
        if self.noise_sigma_c < 0 or self.hotspot_sigma_cells < 0 or self.overpass_jitter_min < 0:
            raise UsageError("standard deviations must be non-negative")
        if not 0.0 <= self.ar_coef < 1.0:
            raise UsageError(f"AR coefficient must lie in [0, 1), got {self.ar_coef}")
        if not (0 <= self.fine_gap_prob <= 1 and 0 <= self.coarse_gap_prob <= 1):
            raise UsageError("gap probabilities must lie in [0, 1]")
        if self.coarsening < 1 or self.days < 1 or not self.years:
            raise UsageError("coarsening, days and years must be positive")

    @property
    def spec(self) -> GridSpec:
        half_r = (self.rows - 1) / 2 * 0.01
        half_c = (self.cols - 1) / 2 * 0.01
        return GridSpec(lat_origin=round(self.lat_center + half_r, 6),
                        lon_origin=round(self.lon_center - half_c, 6), rows=self.rows, cols=self.cols)

    def day_list(self) -> list[datetime]:
        per_year, extra = divmod(self.days, len(self.years))
        out = []
        for i, year in enumerate(self.years):
            start = datetime(year, *self.season_start, tzinfo=timezone.utc)
            out.extend(start + timedelta(days=d) for d in range(per_year + (1 if i < extra else 0)))
        return out

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "SynthConfig":
        d = dict(d)
        for key in ("years", "season_start", "overpass_solar_hours"):
            if key in d:
                d[key] = tuple(d[key])
        return cls(**d)


def _rng(seed: int, *labels) -> np.random.Generator:
    words = [seed] + [zlib.crc32(str(x).encode()) for x in labels]
    return np.random.default_rng(np.random.SeedSequence(words))


def solar_hour(t: datetime, lon: float) -> float:
    """Local mean solar time in hours."""
    return (t.hour + t.minute / 60 + t.second / 3600 + lon / 15.0) % 24.0


def hotspot(config: SynthConfig) -> np.ndarray:
    r, c = np.mgrid[0:config.rows, 0:config.cols].astype(np.float64)
    r0, c0 = (config.rows - 1) / 2, (config.cols - 1) / 2
    if config.hotspot_sigma_cells == 0:
        return np.where((r == r0) & (c == c0), config.hotspot_c, 0.0)
    d2 = (r - r0) ** 2 + (c - c0) ** 2
    return config.hotspot_c * np.exp(-d2 / (2 * config.hotspot_sigma_cells ** 2))


def diurnal(config: SynthConfig, t: datetime) -> float:
    h = solar_hour(t, config.lon_center)
    return config.amplitude_c * np.cos(2 * np.pi * (h - config.peak_solar_hour) / 24.0)


def template(config: SynthConfig, t: datetime) -> np.ndarray:
    """Noise-free field at ``t``."""
    return config.base_c + diurnal(config, t) + hotspot(config)


def frame_times(config: SynthConfig) -> list[datetime]:
    return [day + k * CADENCE for day in config.day_list() for k in range(FRAMES_PER_DAY)]


def generate_truth(config: SynthConfig) -> FrameHistory:
    """Truth frames at 15-minute cadence for every configured day.

    The AR(1) noise is stationary with standard deviation ``noise_sigma_c``
    and runs continuously through consecutive days; it restarts per year.
    """
    spec = config.spec
    spot = hotspot(config)
    phi, sigma = config.ar_coef, config.noise_sigma_c
    innov = sigma * np.sqrt(1.0 - phi ** 2)
    history = FrameHistory()
    for year in config.years:
        days = [d for d in config.day_list() if d.year == year]
        if not days:
            continue
        rng = _rng(config.seed, "truth", year)
        noise = sigma * rng.standard_normal(spec.shape)
        for day in days:
            for k in range(FRAMES_PER_DAY):
                t = day + k * CADENCE
                values = config.base_c + diurnal(config, t) + spot + noise
                history.add(Grid(spec, "lst_c", t, values, city_id=config.city_id, source="truth"))
                noise = phi * noise + innov * rng.standard_normal(spec.shape)
    return history


def truth_at(history: FrameHistory, t: datetime) -> np.ndarray:
    """Linear interpolation between the two bracketing truth frames."""
    step = CADENCE.total_seconds()
    day = t.replace(hour=0, minute=0, second=0, microsecond=0)
    k = int((t - day).total_seconds() // step)
    t0 = day + k * CADENCE
    w = (t - t0).total_seconds() / step
    f0 = history[t0]
    if w == 0:
        return f0.values.copy()
    f1 = history.get(t0 + CADENCE)
    if f1 is None:
        return f0.values.copy()
    return (1.0 - w) * f0.values + w * f1.values


def coarse_observation(config: SynthConfig, truth: np.ndarray, rng: Optional[np.random.Generator] = None,
                       gap_prob: Optional[float] = None) -> np.ndarray:
    """Block mean of truth spread back over each footprint, with whole blocks dropped."""
    f = config.coarsening
    blocks = block_mean(truth, f)
    p = config.coarse_gap_prob if gap_prob is None else gap_prob
    if rng is not None and p > 0:
        blocks = np.where(rng.random(blocks.shape) < p, np.nan, blocks)
    return replicate_blocks(blocks, f)[: truth.shape[0], : truth.shape[1]]


def observe_pair(config: SynthConfig, truth: Grid, gaps: bool = True) -> tuple[Grid, Grid, Grid]:
    """(fine with gaps, coarse block mean, SZA) for one truth frame."""
    rng = _rng(config.seed, "observe", truth.time_utc.isoformat())
    fine = truth.values.copy()
    if gaps and config.fine_gap_prob > 0:
        fine[rng.random(fine.shape) < config.fine_gap_prob] = np.nan
    coarse = coarse_observation(config, truth.values, rng if gaps else None)
    spec, t = truth.spec, truth.time_utc
    return (Grid(spec, "lst_c", t, fine, config.city_id, "fine"),
            Grid(spec, "lst_c", t, coarse, config.city_id, "coarse"),
            Grid(spec, "sza_deg", t, solar_zenith_grid(spec, t), config.city_id, "solar"))


def overpass_times(config: SynthConfig) -> list[datetime]:
    """Jittered fine-sensor acquisition times, within the simulated period."""
    lon_h = config.lon_center / 15.0
    out = []
    for day in config.day_list():
        rng = _rng(config.seed, "overpass", day.date().isoformat())
        for h in config.overpass_solar_hours:
            jitter = rng.uniform(-config.overpass_jitter_min, config.overpass_jitter_min)
            t = day + timedelta(hours=h - lon_h, minutes=jitter)
            t = t.replace(second=0, microsecond=0)
            if t.date() == day.date():
                out.append(t)
    return out


@dataclass
class SynthWorld:
    config: SynthConfig
    truth: FrameHistory
    coarse: list = field(default_factory=list)
    fine: list = field(default_factory=list)


def observe_world(config: SynthConfig, truth: Optional[FrameHistory] = None) -> SynthWorld:
    """Coarse frames at every truth timestamp plus fine scenes at overpass times."""
    truth = generate_truth(config) if truth is None else truth
    world = SynthWorld(config, truth)
    for frame in truth:
        rng = _rng(config.seed, "coarse", frame.time_utc.isoformat())
        values = coarse_observation(config, frame.values, rng)
        world.coarse.append(Grid(frame.spec, "lst_c", frame.time_utc, values, config.city_id, "coarse"))
    for t in overpass_times(config):
        if t not in truth and truth.get(t.replace(minute=t.minute - t.minute % 15)) is None:
            continue
        rng = _rng(config.seed, "fine", t.isoformat())
        values = truth_at(truth, t)
        if config.fine_gap_prob > 0:
            values[rng.random(values.shape) < config.fine_gap_prob] = np.nan
        world.fine.append(Grid(config.spec, "lst_c", t, values, config.city_id, "fine"))
    return world
