"""Turn grids into padded, normalized model arrays and back."""

from __future__ import annotations

from typing import Sequence

import numpy as np

from thermocast.geogrid import Grid, ScenePair, SequenceSample, crop_array, knn_fill, pad_array, solar_zenith_grid
from thermocast.training import ArrayDataset, denormalize, encode_sza, normalize

KNN_K = 5


def downscale_input(coarse: Grid, sza_deg: np.ndarray, canvas: int, k: int = KNN_K) -> np.ndarray:
    """(3, canvas, canvas): imputed normalized coarse LST, cos SZA, coarse validity."""
    valid = coarse.valid
    filled = knn_fill(coarse.values, k) if not valid.all() else coarse.values
    return np.stack([pad_array(normalize(filled), canvas),
                     pad_array(encode_sza(sza_deg), canvas),
                     pad_array(valid.astype(np.float64), canvas)])


def target_arrays(target: Grid, canvas: int) -> tuple[np.ndarray, np.ndarray]:
    """Normalized target with missing cells zeroed, and its 0/1 loss mask."""
    valid = target.valid
    values = np.where(valid, normalize(np.where(valid, target.values, 20.0)), 0.0)
    return pad_array(values, canvas)[None], pad_array(valid.astype(np.float64), canvas)[None]


def downscale_dataset(pairs: Sequence[ScenePair], canvas: int, k: int = KNN_K) -> ArrayDataset:
    xs, ys, ms = [], [], []
    for p in pairs:
        xs.append(downscale_input(p.coarse, p.sza.values, canvas, k))
        y, m = target_arrays(p.fine, canvas)
        ys.append(y)
        ms.append(m)
    return ArrayDataset(np.stack(xs), np.stack(ys), np.stack(ms), [p.sample_id for p in pairs])


def downscale_inputs_for(coarse_frames: Sequence[Grid], canvas: int, k: int = KNN_K) -> np.ndarray:
    return np.stack([downscale_input(g, solar_zenith_grid(g.spec, g.time_utc), canvas, k)
                     for g in coarse_frames])


def nowcast_input(frames: Sequence[Grid], canvas: int) -> np.ndarray:
    """(3, 1, canvas, canvas) normalized frame stack; missing cells become the normalized fill 0."""
    out = []
    for f in frames:
        v = normalize(f.values)
        out.append(pad_array(np.where(np.isfinite(v), v, 0.0), canvas)[None])
    return np.stack(out)


def nowcast_dataset(samples: Sequence[SequenceSample], canvas: int) -> ArrayDataset:
    xs, ys, ms = [], [], []
    for s in samples:
        xs.append(nowcast_input(s.frames, canvas))
        y, m = target_arrays(s.target, canvas)
        ys.append(y)
        ms.append(m)
    return ArrayDataset(np.stack(xs), np.stack(ys), np.stack(ms), [s.sample_id for s in samples])


def output_grid(pred: np.ndarray, like: Grid, source: str, **changes) -> Grid:
    """Crop a (1, canvas, canvas) or (canvas, canvas) prediction back onto ``like``'s grid in degC."""
    field = crop_array(np.asarray(pred).reshape(pred.shape[-2:]), like.spec.rows, like.spec.cols)
    return like.with_values(denormalize(field), variable="lst_c", source=source, **changes)
