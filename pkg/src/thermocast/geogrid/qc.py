from __future__ import annotations

from dataclasses import replace

import numpy as np

from thermocast.errors import ConfigurationError
from thermocast.geogrid.grid import Grid, SwathScene

LST_MIN_C = 0.0
LST_MAX_C = 65.0
MAX_VIEW_ZENITH_DEG = 50.0


def lst_in_range(values: np.ndarray) -> np.ndarray:
    return (values >= LST_MIN_C) & (values <= LST_MAX_C)


def qc_filter_fine(scene: SwathScene) -> SwathScene:
    """Blank fine-resolution swath pixels that fail any quality test.

    Kept pixels have good/nominal quality, excellent/good accuracy, a view
    zenith below 50 degrees, no cloud/shadow/cirrus flag and an LST inside
    [0, 65] degC. Everything else becomes NaN; nothing else changes.
    """
    keep = (
        (scene.quality_flag <= 1)
        & (scene.accuracy_flag <= 1)
        & (scene.view_zenith_deg < MAX_VIEW_ZENITH_DEG)
        & (scene.cloud_flag == 0)
        & lst_in_range(scene.lst_c)
    )
    return replace(scene, lst_c=np.where(keep, scene.lst_c, np.nan))


def qc_filter_coarse(grid: Grid, cloud_mask: Grid, water_mask: Grid) -> Grid:
    """Blank cells flagged (value 1) in either mask; also drops out-of-range LST."""
    for name, mask in (("cloud", cloud_mask), ("water", water_mask)):
        if mask.spec != grid.spec:
            raise ConfigurationError(f"{name} mask grid spec does not match the LST grid")
    bad = (cloud_mask.values == 1) | (water_mask.values == 1) | ~lst_in_range(grid.values)
    return grid.with_values(np.where(bad, np.nan, grid.values))


def range_filter(grid: Grid) -> Grid:
    """Outlier removal for already-gridded LST."""
    return grid.with_values(np.where(lst_in_range(grid.values), grid.values, np.nan))


def coverage_fraction(grid: Grid) -> float:
    """Share of cells holding a value."""
    return float(np.count_nonzero(np.isfinite(grid.values))) / grid.values.size
