from __future__ import annotations

import numpy as np
from scipy.spatial import cKDTree

from thermocast.errors import DataError
from thermocast.geogrid.grid import Grid


def knn_fill(values: np.ndarray, k: int = 5) -> np.ndarray:
    """Fill NaN cells with the plain mean of their ``k`` nearest valid cells.

    Distance is Euclidean in (row, col) index space. Equidistant candidates
    are ordered row-major, so the selected set is unique.
    """
    values = np.asarray(values, dtype=np.float64)
    valid = np.isfinite(values)
    n_valid = int(np.count_nonzero(valid))
    if n_valid < k:
        raise DataError(f"knn imputation needs at least {k} valid cells, found {n_valid}")
    if n_valid == values.size:
        return values.copy()

    vr, vc = np.nonzero(valid)          # row-major order
    vvals = values[vr, vc]
    mr, mc = np.nonzero(~valid)
    tree = cKDTree(np.column_stack([vr, vc]).astype(np.float64))
    dist, _ = tree.query(np.column_stack([mr, mc]).astype(np.float64), k=k)
    dist = dist.reshape(len(mr), k)
    # Squared index distances are integers, so the k-th one is recovered exactly.
    kth = np.rint(dist[:, -1] ** 2).astype(np.int64)

    out = values.copy()
    for r, c, d2max in zip(mr, mc, kth):
        cand = tree.query_ball_point((float(r), float(c)), np.sqrt(d2max) + 1e-6)
        cand = np.sort(np.asarray(cand, dtype=np.int64))
        d2 = (vr[cand] - r) ** 2 + (vc[cand] - c) ** 2
        keep = cand[d2 <= d2max]
        d2 = d2[d2 <= d2max]
        chosen = keep[np.argsort(d2, kind="stable")[:k]]
        out[r, c] = np.mean(vvals[chosen])
    return out


def knn_impute(grid: Grid, k: int = 5) -> Grid:
    return grid.with_values(knn_fill(grid.values, k))
