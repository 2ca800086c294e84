from __future__ import annotations

import numpy as np
from scipy.spatial import cKDTree

from thermocast.geogrid.grid import Grid, GridSpec, SwathScene

SEARCH_RADIUS_DEG = 0.015


def regrid_to_uniform(scene: SwathScene, spec: GridSpec,
                      radius_deg: float = SEARCH_RADIUS_DEG) -> Grid:
    """Nearest-neighbour resampling of a swath onto ``spec``.

    Every valid pixel is assigned to its nearest cell center, provided that
    center lies within ``radius_deg``; a cell hit by several pixels keeps the
    one closest to its center (lowest pixel index on ties). Distances are
    planar with longitude scaled by cos(latitude) at the grid center. Cells
    that receive no pixel stay NaN.
    """
    out = np.full(spec.shape, np.nan)
    ok = np.flatnonzero(np.isfinite(scene.lst_c))
    grid = Grid(spec, "lst_c", scene.time_utc, out, city_id=scene.city_id, source=scene.source)
    if ok.size == 0:
        return grid

    lat0, _ = spec.center()
    kx = np.cos(np.deg2rad(lat0))
    clat, clon = spec.cell_centers()
    centers = np.column_stack([clat.ravel(), clon.ravel() * kx])
    pts = np.column_stack([scene.lat[ok], scene.lon[ok] * kx])
    dist, cell = cKDTree(centers).query(pts, k=1, distance_upper_bound=radius_deg)
    hit = np.isfinite(dist)
    ok, dist, cell = ok[hit], dist[hit], cell[hit]
    # sort by cell, then distance, then pixel index; the first row per cell wins
    order = np.lexsort((ok, dist, cell))
    cell, ok = cell[order], ok[order]
    first = np.ones(cell.size, dtype=bool)
    first[1:] = cell[1:] != cell[:-1]
    flat = out.ravel()
    flat[cell[first]] = scene.lst_c[ok[first]]
    grid.values = flat.reshape(spec.shape)
    return grid


def grid_to_swath(grid: Grid) -> SwathScene:
    """View a grid as a swath of cell-center pixels with nominal flags."""
    lat, lon = grid.spec.cell_centers()
    zeros = np.zeros(grid.spec.shape, dtype=np.int8)
    return SwathScene(lat=lat.ravel(), lon=lon.ravel(), lst_c=grid.values.ravel(),
                      quality_flag=zeros.ravel(), accuracy_flag=zeros.ravel(),
                      view_zenith_deg=np.zeros(lat.size), cloud_flag=zeros.ravel(),
                      time_utc=grid.time_utc, city_id=grid.city_id, source=grid.source)


def replicate_blocks(values: np.ndarray, factor: int) -> np.ndarray:
    """Spread each coarse cell over its ``factor`` x ``factor`` footprint."""
    return np.repeat(np.repeat(values, factor, axis=0), factor, axis=1)


def block_mean(values: np.ndarray, factor: int) -> np.ndarray:
    """Mean over ``factor`` x ``factor`` blocks; edge blocks may be partial."""
    rows, cols = values.shape
    br, bc = -(-rows // factor), -(-cols // factor)
    out = np.empty((br, bc))
    for i in range(br):
        for j in range(bc):
            out[i, j] = values[i * factor:(i + 1) * factor, j * factor:(j + 1) * factor].mean()
    return out


def coarse_to_fine(coarse: np.ndarray, factor: int, shape: tuple[int, int]) -> np.ndarray:
    return replicate_blocks(coarse, factor)[: shape[0], : shape[1]]
