"""Persistence and climatological rolling-median reference forecasts."""

from __future__ import annotations

from datetime import datetime, timedelta
from typing import Iterable, Iterator, Optional

import numpy as np

from thermocast.errors import ConfigurationError, DataError
from thermocast.geogrid import Grid, GridSpec, as_utc

CLIMATOLOGY_DAYS = 5
MIN_CLIMATOLOGY_DAYS = 3


class FrameHistory:
    """Time-indexed frames on one grid; 15-minute cadence with gaps allowed."""

    def __init__(self, frames: Iterable[Grid] = ()):
        self._frames: dict[datetime, Grid] = {}
        self.spec: Optional[GridSpec] = None
        for f in frames:
            self.add(f)

    def add(self, frame: Grid) -> None:
        if self.spec is None:
            self.spec = frame.spec
        elif frame.spec != self.spec:
            raise ConfigurationError("all frames of a history must share one grid spec")
        t = as_utc(frame.time_utc)
        if t in self._frames:
            raise DataError(f"duplicate frame at {t.isoformat()}")
        self._frames[t] = frame

    def get(self, t: datetime) -> Optional[Grid]:
        return self._frames.get(as_utc(t))

    def __getitem__(self, t: datetime) -> Grid:
        frame = self.get(t)
        if frame is None:
            raise DataError(f"no frame at {as_utc(t).isoformat()}")
        return frame

    def __contains__(self, t: datetime) -> bool:
        return as_utc(t) in self._frames

    def __len__(self) -> int:
        return len(self._frames)

    def __iter__(self) -> Iterator[Grid]:
        for t in sorted(self._frames):
            yield self._frames[t]

    def times(self) -> list[datetime]:
        return sorted(self._frames)


def persistence(history: FrameHistory, t: datetime, lead_minutes: int) -> Grid:
    """The frame at ``t``, values untouched, valid at ``t + lead``."""
    frame = history[t]
    return frame.with_values(frame.values.copy(), time_utc=frame.time_utc + timedelta(minutes=lead_minutes),
                             source="persistence")


def climatology_frames(history: FrameHistory, t: datetime, lead_minutes: int,
                       days: int = CLIMATOLOGY_DAYS) -> list[Grid]:
    target = as_utc(t) + timedelta(minutes=lead_minutes)
    out = []
    for k in range(1, days + 1):
        f = history.get(target - timedelta(days=k))
        if f is not None:
            out.append(f)
    return out


def rolling_median(stack: np.ndarray) -> np.ndarray:
    """Pixel-wise median over axis 0 ignoring NaN.

    A pixel is missing when it is NaN in more than half of the layers.
    Even counts average the two middle values.
    """
    n = stack.shape[0]
    missing = np.isnan(stack).sum(axis=0)
    out = np.full(stack.shape[1:], np.nan)
    keep = (missing * 2 <= n) & (missing < n)
    if keep.any():
        out[keep] = np.nanmedian(stack[:, keep], axis=0)
    return out


def climatological_rolling_median(history: FrameHistory, t: datetime, lead_minutes: int,
                                  min_days: int = MIN_CLIMATOLOGY_DAYS) -> Grid:
    """Median of the frames valid at the same time of day on the previous five days."""
    frames = climatology_frames(history, t, lead_minutes)
    if len(frames) < min_days:
        raise DataError(f"climatology needs {min_days} of {CLIMATOLOGY_DAYS} prior days, found {len(frames)}")
    values = rolling_median(np.stack([f.values for f in frames]))
    ref = frames[0]
    return Grid(ref.spec, ref.variable, as_utc(t) + timedelta(minutes=lead_minutes), values,
                city_id=ref.city_id, source="climatology")
