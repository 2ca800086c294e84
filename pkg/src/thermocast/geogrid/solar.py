"""Low-precision solar geometry (NOAA solar calculator formulation).

Geometric zenith angle without refraction; agrees with full SPA ephemerides
to a few hundredths of a degree between 1950 and 2100.
"""

from __future__ import annotations

from datetime import datetime

import numpy as np

from thermocast.errors import UsageError
from thermocast.geogrid.grid import as_utc

_UNIX_EPOCH_JD = 2440587.5


def _sun_terms(t: datetime) -> tuple[float, float, float]:
    """Declination (deg), equation of time (min) and UTC minutes of day."""
    t = as_utc(t)
    if not 1950 <= t.year <= 2100:
        raise UsageError(f"solar position supported for 1950-2100, got {t.year}")
    jd = t.timestamp() / 86400.0 + _UNIX_EPOCH_JD
    jc = (jd - 2451545.0) / 36525.0

    mean_long = (280.46646 + jc * (36000.76983 + jc * 0.0003032)) % 360.0
    mean_anom = 357.52911 + jc * (35999.05029 - 0.0001537 * jc)
    ecc = 0.016708634 - jc * (0.000042037 + 0.0000001267 * jc)
    m = np.deg2rad(mean_anom)
    center = (np.sin(m) * (1.914602 - jc * (0.004817 + 0.000014 * jc))
              + np.sin(2 * m) * (0.019993 - 0.000101 * jc)
              + np.sin(3 * m) * 0.000289)
    true_long = mean_long + center
    omega = np.deg2rad(125.04 - 1934.136 * jc)
    app_long = np.deg2rad(true_long - 0.00569 - 0.00478 * np.sin(omega))
    obliq_mean = 23.0 + (26.0 + (21.448 - jc * (46.815 + jc * (0.00059 - jc * 0.001813))) / 60.0) / 60.0
    obliq = np.deg2rad(obliq_mean + 0.00256 * np.cos(omega))
    decl = np.rad2deg(np.arcsin(np.sin(obliq) * np.sin(app_long)))

    y = np.tan(obliq / 2.0) ** 2
    l0 = np.deg2rad(mean_long)
    eot = 4.0 * np.rad2deg(
        y * np.sin(2 * l0)
        - 2 * ecc * np.sin(m)
        + 4 * ecc * y * np.sin(m) * np.cos(2 * l0)
        - 0.5 * y * y * np.sin(4 * l0)
        - 1.25 * ecc * ecc * np.sin(2 * m)
    )
    minutes = t.hour * 60.0 + t.minute + t.second / 60.0 + t.microsecond / 6e7
    return float(decl), float(eot), minutes


def solar_zenith(lat, lon, time_utc: datetime):
    """Solar zenith angle in degrees for scalar or array lat/lon at one instant."""
    decl, eot, minutes = _sun_terms(time_utc)
    lat = np.asarray(lat, dtype=np.float64)
    lon = np.asarray(lon, dtype=np.float64)
    true_solar = (minutes + eot + 4.0 * lon) % 1440.0
    hour_angle = np.deg2rad(true_solar / 4.0 - 180.0)
    phi = np.deg2rad(lat)
    d = np.deg2rad(decl)
    cosz = np.sin(phi) * np.sin(d) + np.cos(phi) * np.cos(d) * np.cos(hour_angle)
    zen = np.rad2deg(np.arccos(np.clip(cosz, -1.0, 1.0)))
    return float(zen) if zen.ndim == 0 else zen


def subsolar_point(time_utc: datetime) -> tuple[float, float]:
    """Latitude/longitude where the sun is at the zenith."""
    decl, eot, minutes = _sun_terms(time_utc)
    lon = (720.0 - minutes - eot) / 4.0
    lon = (lon + 180.0) % 360.0 - 180.0
    return decl, lon


def solar_zenith_grid(spec, time_utc: datetime) -> np.ndarray:
    lat, lon = spec.cell_centers()
    return solar_zenith(lat, lon, time_utc)
