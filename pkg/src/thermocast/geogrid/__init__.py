"""Grids, quality control, regridding, pairing, imputation and dataset assembly."""

from thermocast.geogrid.canvas import CANVAS_SIZE, crop_array, pad_array, pad_to_canvas
from thermocast.geogrid.dataset import (
    LEAD_TIMES,
    TEST_YEARS,
    DatasetSplit,
    SequenceSample,
    balance_city_cap,
    build_sequences,
    sequence_windows,
    split_by_year,
)
from thermocast.geogrid.grid import Grid, GridSpec, SwathScene, as_utc, format_time, parse_time
from thermocast.geogrid.impute import knn_fill, knn_impute
from thermocast.geogrid.pairing import PairAttempt, ScenePair, pair_scenes
from thermocast.geogrid.qc import coverage_fraction, qc_filter_coarse, qc_filter_fine, range_filter
from thermocast.geogrid.regrid import block_mean, regrid_to_uniform, replicate_blocks
from thermocast.geogrid.solar import solar_zenith, solar_zenith_grid, subsolar_point

__all__ = [
    "CANVAS_SIZE", "LEAD_TIMES", "TEST_YEARS", "DatasetSplit", "Grid", "GridSpec", "PairAttempt",
    "ScenePair", "SequenceSample", "SwathScene", "as_utc", "balance_city_cap", "block_mean",
    "build_sequences", "coverage_fraction", "crop_array", "format_time", "knn_fill", "knn_impute",
    "pad_array", "pad_to_canvas", "pair_scenes", "parse_time", "qc_filter_coarse", "qc_filter_fine",
    "range_filter", "regrid_to_uniform", "replicate_blocks", "sequence_windows", "solar_zenith",
    "solar_zenith_grid", "split_by_year", "subsolar_point",
]
