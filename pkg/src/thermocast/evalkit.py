"""Pixel-pooled verification metrics, stratified reports and diurnal RMSE tables."""

from __future__ import annotations

import csv
import io
import math
from collections import defaultdict
from dataclasses import asdict, dataclass, field
from datetime import datetime, timedelta
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

from thermocast.errors import ConfigurationError, DataError, UsageError
from thermocast.geogrid import Grid, solar_zenith

STRATA = ("city", "month", "local_hour", "lead_minutes", "day_night")
SEASON = ((5, 15), (9, 15))


@dataclass(frozen=True)
class MetricSet:
    r2: Optional[float]
    rmse_c: float
    mae_c: float
    mbe_c: float
    pearson_rho: Optional[float]
    n_pixels: int

    def to_dict(self) -> dict:
        return asdict(self)


def _pairs(pred, target) -> tuple[np.ndarray, np.ndarray]:
    p = pred.values if isinstance(pred, Grid) else np.asarray(pred, dtype=np.float64)
    t = target.values if isinstance(target, Grid) else np.asarray(target, dtype=np.float64)
    if p.shape != t.shape:
        raise ConfigurationError(f"prediction shape {p.shape} != target shape {t.shape}")
    ok = np.isfinite(p) & np.isfinite(t)
    return p[ok].astype(np.float64), t[ok].astype(np.float64)


def metrics_from_pixels(p: np.ndarray, t: np.ndarray) -> MetricSet:
    n = p.size
    if n == 0:
        raise DataError("no jointly valid pixels")
    err = p - t
    rmse = math.sqrt(float(np.mean(err * err)))
    mae = float(np.mean(np.abs(err)))
    mbe = float(np.mean(err))
    r2 = rho = None
    if n >= 2:
        tc = t - t.mean()
        sst = float(np.sum(tc * tc))
        if sst > 0:
            r2 = 1.0 - float(np.sum(err * err)) / sst
            pc = p - p.mean()
            spp = float(np.sum(pc * pc))
            if spp > 0:
                rho = float(np.sum(pc * tc)) / math.sqrt(spp * sst)
                rho = max(-1.0, min(1.0, rho))
    return MetricSet(r2=r2, rmse_c=rmse, mae_c=mae, mbe_c=mbe, pearson_rho=rho, n_pixels=int(n))


def compute_metrics(pred, target) -> MetricSet:
    """Metrics over pixels valid in both fields; R2 and rho are None for degenerate variance."""
    return metrics_from_pixels(*_pairs(pred, target))


@dataclass
class EvalSample:
    """One scored field: prediction and target plus the labels used for stratification."""

    pred: np.ndarray
    target: np.ndarray
    city_id: str
    time_utc: datetime
    lead_minutes: int = 0
    utc_offset_hours: float = 0.0
    center_sza_deg: Optional[float] = None

    @classmethod
    def from_grids(cls, pred: Grid, target: Grid, lead_minutes: int = 0,
                   utc_offset_hours: float = 0.0) -> "EvalSample":
        lat, lon = target.spec.center()
        return cls(pred.values, target.values, target.city_id, target.time_utc, lead_minutes,
                   utc_offset_hours, float(solar_zenith(lat, lon, target.time_utc)))

    @property
    def local_time(self) -> datetime:
        return self.time_utc + timedelta(hours=self.utc_offset_hours)


def in_season(t: datetime) -> bool:
    (m0, d0), (m1, d1) = SEASON
    return (m0, d0) <= (t.month, t.day) <= (m1, d1)


def stratum_of(sample: EvalSample, key: str):
    if key == "city":
        return sample.city_id
    if key == "month":
        return sample.local_time.month if in_season(sample.local_time) else None
    if key == "local_hour":
        return sample.local_time.hour
    if key == "lead_minutes":
        return sample.lead_minutes
    if key == "day_night":
        if sample.center_sza_deg is None:
            raise DataError("day/night split needs the scene-center solar zenith angle")
        return "night" if sample.center_sza_deg >= 90.0 else "day"
    raise UsageError(f"unknown stratification key {key!r}; expected one of {STRATA}")


def pooled_metrics(samples: Iterable[EvalSample]) -> MetricSet:
    ps, ts = [], []
    for s in samples:
        p, t = _pairs(s.pred, s.target)
        ps.append(p)
        ts.append(t)
    if not ps:
        raise DataError("no samples to score")
    return metrics_from_pixels(np.concatenate(ps), np.concatenate(ts))


@dataclass
class StratifiedReport:
    key: str
    strata: dict = field(default_factory=dict)

    def rows(self) -> list[dict]:
        return [{self.key: k, **m.to_dict()} for k, m in self.strata.items()]


def stratify(samples: Sequence[EvalSample], key: str) -> StratifiedReport:
    """Pixel-pooled metrics per stratum; empty strata are left out."""
    groups: dict = defaultdict(list)
    for s in samples:
        label = stratum_of(s, key)
        if label is not None:
            groups[label].append(s)
    report = StratifiedReport(key)
    for label in sorted(groups, key=lambda v: (str(type(v)), v)):
        try:
            report.strata[label] = pooled_metrics(groups[label])
        except DataError:
            continue
    return report


DIURNAL_COLUMNS = ("lead_minutes", "local_hour", "persistence_rmse_c", "climatology_rmse_c", "model_rmse_c")


@dataclass
class ForecastCase:
    """Target plus the forecast of every predictor; ``time_utc`` is the valid time."""

    target: np.ndarray
    time_utc: datetime
    lead_minutes: int
    persistence: np.ndarray
    climatology: np.ndarray
    model: Optional[np.ndarray] = None
    utc_offset_hours: float = 0.0

    @property
    def local_hour(self) -> int:
        return (self.time_utc + timedelta(hours=self.utc_offset_hours)).hour


def _rmse(preds: list, targets: list) -> float:
    p, t = _pairs(np.concatenate([np.ravel(a) for a in preds]), np.concatenate([np.ravel(a) for a in targets]))
    if p.size == 0:
        return float("nan")
    return math.sqrt(float(np.mean((p - t) ** 2)))


def diurnal_curve(cases: Sequence[ForecastCase]) -> list[dict]:
    """Per (lead, local hour of the valid time) RMSE of each predictor.

    The model column appears only if every case carries a model forecast.
    Hours without data are omitted.
    """
    with_model = bool(cases) and all(c.model is not None for c in cases)
    groups: dict = defaultdict(list)
    for c in cases:
        groups[(c.lead_minutes, c.local_hour)].append(c)
    rows = []
    for lead, hour in sorted(groups):
        group = groups[(lead, hour)]
        targets = [c.target for c in group]
        row = {"lead_minutes": lead, "local_hour": hour,
               "persistence_rmse_c": _rmse([c.persistence for c in group], targets),
               "climatology_rmse_c": _rmse([c.climatology for c in group], targets)}
        if with_model:
            row["model_rmse_c"] = _rmse([c.model for c in group], targets)
        rows.append(row)
    return rows


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return "" if math.isnan(value) else f"{value:.6f}"
    return str(value)


def to_csv(rows: Sequence[dict], columns: Optional[Sequence[str]] = None) -> str:
    """Fixed-column CSV with six-decimal floats and empty cells for absent values."""
    if columns is None:
        columns = list(rows[0].keys()) if rows else []
        columns = [c for c in DIURNAL_COLUMNS if c in columns] + [c for c in columns if c not in DIURNAL_COLUMNS]
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for r in rows:
        writer.writerow([_fmt(r.get(c)) for c in columns])
    return buf.getvalue()


def write_pgm(path, field_values: np.ndarray, vmin: Optional[float] = None, vmax: Optional[float] = None) -> Path:
    """8-bit binary PGM heat map; missing cells are written as 0."""
    arr = np.asarray(field_values, dtype=np.float64)
    ok = np.isfinite(arr)
    lo = float(np.min(arr[ok])) if vmin is None and ok.any() else (vmin or 0.0)
    hi = float(np.max(arr[ok])) if vmax is None and ok.any() else (vmax if vmax is not None else 1.0)
    span = hi - lo if hi > lo else 1.0
    img = np.zeros(arr.shape, dtype=np.uint8)
    img[ok] = np.clip(np.rint(1 + 254 * (arr[ok] - lo) / span), 1, 255).astype(np.uint8)
    path = Path(path)
    path.write_bytes(f"P5\n{arr.shape[1]} {arr.shape[0]}\n255\n".encode() + img.tobytes())
    return path
