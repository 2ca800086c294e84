"""Pipeline configuration: defaults, JSON overrides and the config hash."""

from __future__ import annotations

import copy
import hashlib
import json
from pathlib import Path
from typing import Optional

from thermocast.errors import ConfigurationError, UsageError
from thermocast.geogrid import CANVAS_SIZE, LEAD_TIMES, TEST_YEARS
from thermocast.geogrid.pairing import MIN_COARSE_COVERAGE, MIN_FINE_COVERAGE, MIN_OVERLAP
from thermocast.synth import SynthConfig
from thermocast.training import TASK_DEFAULTS, TrainConfig


def default_config() -> dict:
    return {
        "cities": [],
        "utc_offsets": {},
        "season": {"start": [5, 15], "end": [9, 15]},
        "thresholds": {"min_fine_coverage": MIN_FINE_COVERAGE, "min_coarse_coverage": MIN_COARSE_COVERAGE,
                       "min_overlap": MIN_OVERLAP, "city_cap": 1500},
        "knn_k": 5,
        "canvas_size": CANVAS_SIZE,
        "lead_times": list(LEAD_TIMES),
        "test_years": list(TEST_YEARS),
        "val_fraction": 0.1,
        "seed": 0,
        "downscale": TrainConfig.for_task("downscale").to_dict(),
        "nowcast": TrainConfig.for_task("nowcast").to_dict(),
        "nowcast_max_train_samples": None,
        "synth": None,
    }


def desk_config() -> dict:
    """Synthetic single-city setup that runs end to end on one CPU core."""
    cfg = default_config()
    synth = SynthConfig()
    cfg.update({
        "cities": [synth.city_id],
        "utc_offsets": {synth.city_id: synth.utc_offset_hours},
        "canvas_size": 16,
        "synth": synth.to_dict(),
        "nowcast_max_train_samples": 512,
    })
    cfg["downscale"].update({"lr": 1e-3, "batch_size": 8, "max_epochs": 40, "width_factor": 0.25})
    cfg["nowcast"].update({"lr": 1e-3, "batch_size": 32, "max_epochs": 20, "width_factor": 0.25})
    return cfg


def _merge(base: dict, override: dict, path: str = "") -> None:
    for key, value in override.items():
        where = f"{path}{key}"
        if key not in base:
            raise ConfigurationError(f"unknown configuration key {where!r}")
        if isinstance(base[key], dict) and isinstance(value, dict) and key not in ("utc_offsets",):
            _merge(base[key], value, where + ".")
        else:
            base[key] = value


def diff(base, other, path: str = "") -> dict:
    """Flattened ``{dotted.key: value}`` of every leaf in ``other`` that differs from ``base``."""
    out = {}
    if isinstance(base, dict) and isinstance(other, dict):
        for key in sorted(set(base) | set(other)):
            out.update(diff(base.get(key), other.get(key), f"{path}{key}."))
    elif base != other:
        out[path.rstrip(".")] = other
    return out


def validate(cfg: dict) -> dict:
    for task in TASK_DEFAULTS:
        block = dict(cfg[task])
        block["task"] = task
        try:
            cfg[task] = TrainConfig.from_dict(block).to_dict()
        except (TypeError, UsageError) as exc:
            raise ConfigurationError(f"bad {task} training block: {exc}") from exc
    if cfg["synth"] is not None:
        try:
            SynthConfig.from_dict(cfg["synth"])
        except (TypeError, UsageError) as exc:
            raise ConfigurationError(f"bad synth block: {exc}") from exc
    bad = [lead for lead in cfg["lead_times"] if lead not in LEAD_TIMES]
    if bad:
        raise ConfigurationError(f"lead times {bad} outside {LEAD_TIMES}")
    size = cfg["canvas_size"]
    if size < 16 or size % 16:
        raise ConfigurationError(f"canvas_size must be a positive multiple of 16, got {size}")
    return cfg


def load_config(path: Optional[str] = None, preset: str = "default") -> dict:
    """Preset defaults updated by a JSON file; unknown keys are refused."""
    override: dict = {}
    if path is not None:
        try:
            override = json.loads(Path(path).read_text("utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigurationError(f"cannot read config {path}: {exc}") from exc
        if not isinstance(override, dict):
            raise ConfigurationError("config file must hold a JSON object")
        preset = override.pop("preset", preset)
    if preset not in ("default", "desk"):
        raise ConfigurationError(f"unknown preset {preset!r}")
    cfg = desk_config() if preset == "desk" else default_config()
    _merge(cfg, override)
    return validate(cfg)


def apply_cli(cfg: dict, seed: Optional[int] = None, width_factor: Optional[float] = None) -> dict:
    cfg = copy.deepcopy(cfg)
    if seed is not None:
        cfg["seed"] = seed
        cfg["downscale"]["seed"] = seed
        cfg["nowcast"]["seed"] = seed
    if width_factor is not None:
        cfg["downscale"]["width_factor"] = width_factor
        cfg["nowcast"]["width_factor"] = width_factor
    return validate(cfg)


def config_hash(cfg: dict) -> str:
    blob = json.dumps(cfg, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()[:16]
