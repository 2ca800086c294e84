from __future__ import annotations

from typing import Optional

import numpy as np

from thermocast.errors import ConfigurationError
from thermocast.geogrid.grid import Grid, GridSpec

CANVAS_SIZE = 128


def canvas_offsets(rows: int, cols: int, size: int = CANVAS_SIZE) -> tuple[int, int]:
    if rows > size or cols > size:
        raise ConfigurationError(f"grid {rows}x{cols} does not fit a {size}x{size} canvas")
    return (size - rows) // 2, (size - cols) // 2


def canvas_spec(spec: GridSpec, size: int = CANVAS_SIZE) -> GridSpec:
    r0, c0 = canvas_offsets(spec.rows, spec.cols, size)
    return GridSpec(lat_origin=spec.lat_origin - spec.d_lat * r0,
                    lon_origin=spec.lon_origin - spec.d_lon * c0, rows=size, cols=size)


def pad_array(values: np.ndarray, size: int = CANVAS_SIZE, fill: float = 0.0) -> np.ndarray:
    rows, cols = values.shape
    r0, c0 = canvas_offsets(rows, cols, size)
    out = np.full((size, size), fill, dtype=np.float64)
    out[r0:r0 + rows, c0:c0 + cols] = values
    return out


def crop_array(canvas: np.ndarray, rows: int, cols: int) -> np.ndarray:
    size = canvas.shape[-1]
    r0, c0 = canvas_offsets(rows, cols, size)
    return canvas[..., r0:r0 + rows, c0:c0 + cols]


def pad_to_canvas(grid: Grid, size: int = CANVAS_SIZE, valid: Optional[np.ndarray] = None,
                  fill: float = 0.0) -> tuple[Grid, Grid]:
    """Center ``grid`` on a ``size`` x ``size`` canvas.

    Padding cells take ``fill`` (callers pass normalized values, so 0 is the
    normalized fill) and get mask 0. Interior mask cells are 1 where
    ``valid`` is true; by default ``valid`` is the grid's own finiteness,
    pass the pre-imputation mask when padding an imputed grid.
    """
    if valid is None:
        valid = grid.valid
    spec = canvas_spec(grid.spec, size)
    values = pad_array(grid.values, size, fill)
    mask = pad_array(valid.astype(np.float64), size, 0.0)
    padded = Grid(spec, grid.variable, grid.time_utc, values, grid.city_id, grid.source)
    return padded, Grid(spec, "valid", grid.time_utc, mask, grid.city_id, grid.source)
