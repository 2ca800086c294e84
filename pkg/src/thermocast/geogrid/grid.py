"""Georeferenced grid types on the fixed 0.01 degree lat/lon lattice."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from datetime import datetime, timezone

import numpy as np

from thermocast.errors import ConfigurationError, UsageError

RESOLUTION_DEG = 0.01
VARIABLES = ("lst_c", "sza_deg", "valid")


def as_utc(t: datetime) -> datetime:
    """Attach UTC to naive datetimes; convert aware ones."""
    if t.tzinfo is None:
        return t.replace(tzinfo=timezone.utc)
    return t.astimezone(timezone.utc)


def parse_time(text: str) -> datetime:
    return as_utc(datetime.fromisoformat(text.replace("Z", "+00:00")))


def format_time(t: datetime) -> str:
    return as_utc(t).strftime("%Y-%m-%dT%H:%M:%SZ")


@dataclass(frozen=True)
class GridSpec:
    """Regular grid anchored at its north-west corner.

    Rows run north to south (``d_lat`` is negative), columns west to east.
    """

    lat_origin: float
    lon_origin: float
    rows: int
    cols: int
    d_lat: float = -RESOLUTION_DEG
    d_lon: float = RESOLUTION_DEG

    def __post_init__(self):
        if self.rows <= 0 or self.cols <= 0:
            raise ConfigurationError(f"grid extents must be positive, got {self.rows}x{self.cols}")
        if self.d_lat != -RESOLUTION_DEG or self.d_lon != RESOLUTION_DEG:
            raise ConfigurationError("grid spacing is fixed at -0.01 (lat) / +0.01 (lon) degrees")
        if not (-90.0 <= self.lat_origin <= 90.0 and -180.0 <= self.lon_origin <= 180.0):
            raise ConfigurationError("grid origin outside valid lat/lon range")

    @property
    def shape(self) -> tuple[int, int]:
        return (self.rows, self.cols)

    def cell_centers(self) -> tuple[np.ndarray, np.ndarray]:
        """Latitude and longitude of every cell center, each shaped (rows, cols)."""
        lat = self.lat_origin + self.d_lat * (np.arange(self.rows) + 0.5)
        lon = self.lon_origin + self.d_lon * (np.arange(self.cols) + 0.5)
        return np.meshgrid(lat, lon, indexing="ij")

    def center(self) -> tuple[float, float]:
        return (self.lat_origin + self.d_lat * self.rows / 2.0,
                self.lon_origin + self.d_lon * self.cols / 2.0)

    def index_of(self, lat: float, lon: float) -> tuple[int, int]:
        """Row/col of the cell containing (lat, lon); may fall outside the grid."""
        r = math.floor((lat - self.lat_origin) / self.d_lat)
        c = math.floor((lon - self.lon_origin) / self.d_lon)
        return r, c

    def to_dict(self) -> dict:
        return {"lat_origin": self.lat_origin, "lon_origin": self.lon_origin,
                "rows": self.rows, "cols": self.cols, "d_lat": self.d_lat, "d_lon": self.d_lon}

    @classmethod
    def from_dict(cls, d: dict) -> "GridSpec":
        return cls(lat_origin=float(d["lat_origin"]), lon_origin=float(d["lon_origin"]),
                   rows=int(d["rows"]), cols=int(d["cols"]),
                   d_lat=float(d.get("d_lat", -RESOLUTION_DEG)),
                   d_lon=float(d.get("d_lon", RESOLUTION_DEG)))


@dataclass
class Grid:
    """One variable on a :class:`GridSpec` at one instant; NaN marks missing cells."""

    spec: GridSpec
    variable: str
    time_utc: datetime
    values: np.ndarray
    city_id: str = ""
    source: str = ""

    def __post_init__(self):
        if self.variable not in VARIABLES:
            raise UsageError(f"unknown variable {self.variable!r}; expected one of {VARIABLES}")
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.shape != self.spec.shape:
            raise ConfigurationError(f"values shape {self.values.shape} != grid {self.spec.shape}")
        self.time_utc = as_utc(self.time_utc)

    @property
    def valid(self) -> np.ndarray:
        return np.isfinite(self.values)

    def with_values(self, values: np.ndarray, **changes) -> "Grid":
        return replace(self, values=np.asarray(values, dtype=np.float64), **changes)

    def copy(self) -> "Grid":
        return replace(self, values=self.values.copy())


@dataclass
class SwathScene:
    """Per-pixel swath acquisition with decoded quality information.

    Flag codes (the ingest contract):

    * ``quality_flag``: 0 good, 1 nominal, 2 poor, 3 not produced
    * ``accuracy_flag``: 0 excellent, 1 good, 2 fair, 3 poor
    * ``cloud_flag``: 0 clear, 1 cloud, 2 cloud shadow, 3 cirrus
    """

    lat: np.ndarray
    lon: np.ndarray
    lst_c: np.ndarray
    quality_flag: np.ndarray
    accuracy_flag: np.ndarray
    view_zenith_deg: np.ndarray
    cloud_flag: np.ndarray
    time_utc: datetime
    city_id: str = ""
    source: str = ""
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        self.lat = np.asarray(self.lat, dtype=np.float64)
        self.lon = np.asarray(self.lon, dtype=np.float64)
        self.lst_c = np.asarray(self.lst_c, dtype=np.float64)
        n = self.lat.shape
        for name in ("lon", "lst_c", "quality_flag", "accuracy_flag", "view_zenith_deg", "cloud_flag"):
            arr = np.asarray(getattr(self, name))
            if arr.shape != n:
                raise ConfigurationError(f"swath field {name} has shape {arr.shape}, expected {n}")
            setattr(self, name, arr)
        if np.any(np.abs(self.lat) > 90) or np.any(np.abs(self.lon) > 180):
            raise UsageError("swath coordinates outside lat [-90, 90] / lon [-180, 180]")
        self.time_utc = as_utc(self.time_utc)

    def __len__(self) -> int:
        return int(self.lat.size)
