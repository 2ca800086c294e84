"""``thermocast`` command line: synth, ingest, pair, train, downscale, sequence, nowcast, benchmark, evaluate.

Every command reads and writes under one data root (``--out`` or
``THERMOCAST_DATA_DIR``). ``synth`` stores the resolved configuration as
``config.json`` in the root; later commands use it unless ``--config`` is
given. Catalogs are JSON lines under ``catalogs/``; every record carries the
config hash and seed that produced it.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import sys
import zlib
from collections import defaultdict
from datetime import datetime
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from thermocast import __version__
from thermocast import checkpoint as ckpt_io
from thermocast import config as cfgmod
from thermocast import evalkit, features
from thermocast.benchmarks import FrameHistory, climatological_rolling_median, persistence
from thermocast.errors import ConfigurationError, DataError, ThermocastError
from thermocast.geogrid import (
    Grid,
    ScenePair,
    SequenceSample,
    balance_city_cap,
    build_sequences,
    coverage_fraction,
    pair_scenes,
    parse_time,
    range_filter,
    split_by_year,
)
from thermocast.io import read_catalog, read_lstg, write_catalog, write_lstg
from thermocast.models import ConvLSTMSpec, UNetSpec, build_convlstm, build_unet
from thermocast.synth import SynthConfig, observe_world
from thermocast.training import TrainConfig, predict, train

log = logging.getLogger("thermocast")

DOWNSCALE_CKPT = "models/downscale.zip"


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigurationError(f"{self.prog}: {message}")


class Context:
    """Resolved root, configuration and helpers shared by all commands."""

    def __init__(self, args: argparse.Namespace, preset: str = "default"):
        root = args.out or os.environ.get("THERMOCAST_DATA_DIR")
        if not root:
            raise ConfigurationError("no data root: pass --out or set THERMOCAST_DATA_DIR")
        self.root = Path(root)
        stored = self.root / "config.json"
        if args.config:
            cfg = cfgmod.load_config(args.config, preset)
        elif stored.is_file():
            cfg = cfgmod.load_config(str(stored))
        else:
            cfg = cfgmod.load_config(None, preset)
        self.cfg = cfgmod.apply_cli(cfg, seed=args.seed, width_factor=args.width_factor)
        self.hash = cfgmod.config_hash(self.cfg)
        self.seed = self.cfg["seed"]
        self.args = args
        self.leads()

    def stamp(self, record: dict) -> dict:
        return {**record, "config_hash": self.hash, "seed": self.seed}

    def path(self, rel: str) -> Path:
        return self.root / rel

    def rel(self, path: Path) -> str:
        return path.relative_to(self.root).as_posix()

    def catalog(self, name: str) -> Path:
        return self.root / "catalogs" / name

    def cities(self, available: Sequence[str]) -> list[str]:
        if self.args.city:
            if self.args.city not in available:
                raise DataError(f"city {self.args.city!r} has no data (known: {sorted(available)})")
            return [self.args.city]
        wanted = self.cfg["cities"] or sorted(available)
        return [c for c in wanted if c in available]

    def leads(self) -> list[int]:
        if self.args.lead is not None:
            if self.args.lead not in self.cfg["lead_times"]:
                raise ConfigurationError(f"lead {self.args.lead} not in configured {self.cfg['lead_times']}")
            return [self.args.lead]
        return list(self.cfg["lead_times"])

    def train_config(self, task: str) -> TrainConfig:
        return TrainConfig.from_dict(self.cfg[task])

    def offset(self, city: str) -> float:
        return float(self.cfg["utc_offsets"].get(city, 0.0))

    def overrides(self) -> dict:
        return cfgmod.diff(cfgmod.default_config(), self.cfg)


def _stamp_name(t: datetime) -> str:
    return t.strftime("%Y%m%dT%H%M%SZ")


def _file_hash(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _in_season(cfg: dict, t: datetime) -> bool:
    start, end = cfg["season"]["start"], cfg["season"]["end"]
    return tuple(start) <= (t.month, t.day) <= tuple(end)


def _save_config(ctx: Context) -> None:
    ctx.root.mkdir(parents=True, exist_ok=True)
    text = json.dumps(ctx.cfg, sort_keys=True, indent=1) + "\n"
    (ctx.root / "config.json").write_text(text, "utf-8")


# -- commands -----------------------------------------------------------------


def cmd_synth(ctx: Context) -> int:
    if ctx.cfg["synth"] is None:
        raise ConfigurationError("config has no synth block")
    scfg = SynthConfig.from_dict({**ctx.cfg["synth"], "seed": ctx.seed})
    world = observe_world(scfg)
    records = []
    for product, grids in (("coarse", world.coarse), ("fine", world.fine)):
        for g in grids:
            path = ctx.path(f"raw/{scfg.city_id}/{product}/{_stamp_name(g.time_utc)}.lstg")
            write_lstg(path, g)
            records.append(ctx.stamp({"kind": "scene", "product": product, "path": ctx.rel(path),
                                      "city_id": g.city_id, "time_utc": g.time_utc.isoformat(),
                                      "coverage": round(coverage_fraction(g), 12)}))
    write_catalog(ctx.catalog("raw.jsonl"), records)
    _save_config(ctx)
    log.info("synth: %d coarse and %d fine scenes", len(world.coarse), len(world.fine))
    return 0


def cmd_ingest(ctx: Context) -> int:
    raw = read_catalog(ctx.catalog("raw.jsonl"))
    cities = ctx.cities(sorted({r["city_id"] for r in raw}))
    records = []
    for r in raw:
        if r["city_id"] not in cities:
            continue
        t = parse_time(r["time_utc"])
        if not _in_season(ctx.cfg, t):
            records.append(ctx.stamp({**_strip(r), "kind": "rejection", "reason": "out_of_season"}))
            continue
        grid = range_filter(read_lstg(ctx.path(r["path"])))
        path = ctx.path(f"scenes/{r['city_id']}/{r['product']}/{_stamp_name(t)}.lstg")
        write_lstg(path, grid)
        records.append(ctx.stamp({"kind": "scene", "product": r["product"], "path": ctx.rel(path),
                                  "source_path": r["path"], "city_id": r["city_id"],
                                  "time_utc": r["time_utc"], "coverage": round(coverage_fraction(grid), 12)}))
    if not any(r["kind"] == "scene" for r in records):
        raise DataError("ingest produced no scenes")
    write_catalog(ctx.catalog("scenes.jsonl"), records)
    return 0


def _strip(record: dict) -> dict:
    return {k: v for k, v in record.items() if k not in ("config_hash", "seed")}


def _load_scenes(ctx: Context) -> dict:
    """{city: {"coarse": [records], "fine": [records]}} sorted by time."""
    out: dict = defaultdict(lambda: {"coarse": [], "fine": []})
    for r in read_catalog(ctx.catalog("scenes.jsonl")):
        if r["kind"] == "scene":
            out[r["city_id"]][r["product"]].append(r)
    for city in out:
        for product in ("coarse", "fine"):
            out[city][product].sort(key=lambda r: r["time_utc"])
    return out


def cmd_pair(ctx: Context) -> int:
    scenes = _load_scenes(ctx)
    th = ctx.cfg["thresholds"]
    accepted: list[tuple[ScenePair, dict]] = []
    rejected = []
    for city in ctx.cities(sorted(scenes)):
        coarse_recs = scenes[city]["coarse"]
        coarse = [read_lstg(ctx.path(r["path"])) for r in coarse_recs]
        coarse_path = {g.time_utc: r["path"] for g, r in zip(coarse, coarse_recs)}
        for r in scenes[city]["fine"]:
            fine = read_lstg(ctx.path(r["path"]))
            att = pair_scenes(fine, coarse, th["min_fine_coverage"], th["min_coarse_coverage"], th["min_overlap"])
            stats = {"fine": r["path"], "city_id": city, "time_utc": r["time_utc"],
                     "time_gap_minutes": att.time_gap_minutes, "fine_coverage": att.fine_coverage,
                     "coarse_coverage": att.coarse_coverage, "overlap_fraction": att.overlap_fraction,
                     "coarse": coarse_path[att.coarse.time_utc] if att.coarse is not None else None}
            if att.accepted:
                accepted.append((att.pair, stats))
            else:
                rejected.append({**stats, "kind": "rejection", "reason": att.reason})
    kept = balance_city_cap([p for p, _ in accepted], cap=th["city_cap"], seed=ctx.seed)
    kept_ids = {p.sample_id for p in kept}
    split = split_by_year(kept, ctx.cfg["val_fraction"], ctx.seed, ctx.cfg["test_years"]) if kept else None
    records = []
    for pair, stats in accepted:
        if pair.sample_id not in kept_ids:
            records.append({**stats, "kind": "rejection", "reason": "city_cap"})
            continue
        sza_path = ctx.path(f"pairs/{pair.city_id}/{_stamp_name(pair.time_utc)}_sza.lstg")
        write_lstg(sza_path, pair.sza)
        records.append({**stats, "kind": "pair", "sample_id": pair.sample_id, "sza": ctx.rel(sza_path),
                        "role": split.role_of(pair.sample_id)})
    records.extend(rejected)
    records.sort(key=lambda r: (r["city_id"], r["time_utc"], r["kind"]))
    write_catalog(ctx.catalog("pairs.jsonl"), [ctx.stamp(r) for r in records])
    log.info("pair: %d accepted, %d rejected", len(kept), len(records) - len(kept))
    return 0


def _load_pairs(ctx: Context, roles: Sequence[str]) -> list[tuple[dict, ScenePair]]:
    out = []
    for r in read_catalog(ctx.catalog("pairs.jsonl")):
        if r["kind"] != "pair" or r["role"] not in roles:
            continue
        if ctx.args.city and r["city_id"] != ctx.args.city:
            continue
        fine = read_lstg(ctx.path(r["fine"]))
        coarse = read_lstg(ctx.path(r["coarse"]))
        sza = read_lstg(ctx.path(r["sza"]))
        out.append((r, ScenePair(coarse, sza, fine, r["city_id"], r["time_gap_minutes"],
                                 r["coarse_coverage"], r["fine_coverage"], r["overlap_fraction"])))
    return out


def _upsert_model(ctx: Context, record: dict) -> None:
    path = ctx.catalog("models.jsonl")
    existing = read_catalog(path) if path.is_file() else []
    keep = [r for r in existing if r["path"] != record["path"]]
    write_catalog(path, sorted(keep + [ctx.stamp(record)], key=lambda r: r["path"]))


def cmd_train_downscale(ctx: Context) -> int:
    canvas, k = ctx.cfg["canvas_size"], ctx.cfg["knn_k"]
    train_pairs = [p for r, p in _load_pairs(ctx, ("train",))]
    val_pairs = [p for r, p in _load_pairs(ctx, ("validation",))]
    if not train_pairs:
        raise DataError("pair catalog has no training pairs")
    if not val_pairs:
        raise DataError("pair catalog has no validation pairs")
    tcfg = ctx.train_config("downscale")
    model = build_unet(UNetSpec(width_factor=tcfg.width_factor), tcfg.seed)
    data_hash = _file_hash(ctx.catalog("pairs.jsonl"))
    ckpt, report = train(model, features.downscale_dataset(train_pairs, canvas, k),
                         features.downscale_dataset(val_pairs, canvas, k), tcfg, data_hash=data_hash)
    ckpt.extra = {"config_hash": ctx.hash, "overrides": ctx.overrides(), "canvas_size": canvas, "knn_k": k,
                  "report": report.to_dict()}
    path = ckpt_io.save(ckpt, ctx.path(DOWNSCALE_CKPT))
    _upsert_model(ctx, {"kind": "model", "task": "downscale", "path": ctx.rel(path),
                        "sha256": _file_hash(path), **ckpt.metrics})
    log.info("train-downscale: best epoch %d, val RMSE %.3f C", report.best_epoch, report.best_val_rmse_c)
    return 0


def _load_checkpoint(ctx: Context, rel: str):
    path = ctx.path(rel)
    if not path.is_file():
        raise ConfigurationError(f"missing checkpoint {path}")
    return ckpt_io.load_model(path)


def cmd_downscale(ctx: Context) -> int:
    model, ckpt = _load_checkpoint(ctx, DOWNSCALE_CKPT)
    if ckpt.architecture.get("kind") != "unet":
        raise ConfigurationError(f"{DOWNSCALE_CKPT} does not hold a downscaling model")
    canvas, k = ckpt.extra["canvas_size"], ckpt.extra["knn_k"]
    scenes = _load_scenes(ctx)
    for city in ctx.cities(sorted(scenes)):
        records, grids, recs = [], [], []
        for r in scenes[city]["coarse"]:
            g = read_lstg(ctx.path(r["path"]))
            if np.count_nonzero(g.valid) < k:
                records.append({"kind": "rejection", "reason": "too_few_valid", "coarse": r["path"],
                                "city_id": city, "time_utc": r["time_utc"]})
                continue
            grids.append(g)
            recs.append(r)
        for start in range(0, len(grids), 256):
            chunk = grids[start:start + 256]
            pred = predict(model, features.downscale_inputs_for(chunk, canvas, k), batch_size=64)
            for g, r, p in zip(chunk, recs[start:start + 256], pred):
                out = features.output_grid(p, g, "downscaled")
                path = ctx.path(f"downscaled/{city}/{_stamp_name(g.time_utc)}.lstg")
                write_lstg(path, out)
                records.append({"kind": "frame", "path": ctx.rel(path), "coarse": r["path"],
                                "city_id": city, "time_utc": r["time_utc"]})
        records.sort(key=lambda r: (r["time_utc"], r["kind"]))
        write_catalog(ctx.catalog(f"downscaled_{city}.jsonl"), [ctx.stamp(r) for r in records])
    return 0


def _load_frames(ctx: Context, city: str) -> tuple[list[Grid], dict]:
    frames, paths = [], {}
    for r in read_catalog(ctx.catalog(f"downscaled_{city}.jsonl")):
        if r["kind"] == "frame":
            g = read_lstg(ctx.path(r["path"]))
            frames.append(g)
            paths[g.time_utc] = r["path"]
    frames.sort(key=lambda g: g.time_utc)
    return frames, paths


def _cities_with(ctx: Context, prefix: str) -> list[str]:
    return sorted(p.name[len(prefix):-len(".jsonl")] for p in (ctx.root / "catalogs").glob(f"{prefix}*.jsonl"))


def _downscaled_cities(ctx: Context) -> list[str]:
    cities = ctx.cities(_cities_with(ctx, "downscaled_"))
    if not cities:
        raise DataError("no downscaled frames; run downscale first")
    return cities


def cmd_build_sequences(ctx: Context) -> int:
    for city in _downscaled_cities(ctx):
        frames, paths = _load_frames(ctx, city)
        for lead in ctx.leads():
            seqs = build_sequences(frames, lead)
            if not seqs:
                raise DataError(f"{city}: no complete sequences for lead {lead}")
            split = split_by_year(seqs, ctx.cfg["val_fraction"], ctx.seed, ctx.cfg["test_years"])
            records = [ctx.stamp({"kind": "sequence", "sample_id": s.sample_id, "city_id": city,
                                  "lead_minutes": lead, "time_utc": s.time_utc.isoformat(),
                                  "frames": [paths[f.time_utc] for f in s.frames],
                                  "target": paths[s.target.time_utc], "role": split.role_of(s.sample_id)})
                       for s in seqs]
            write_catalog(ctx.catalog(f"sequences_{city}_L{lead}.jsonl"), records)
    return 0


def _load_sequences(ctx: Context, city: str, lead: int, roles: Sequence[str],
                    cache: Optional[dict] = None) -> list[SequenceSample]:
    cache = {} if cache is None else cache

    def grid(rel: str) -> Grid:
        if rel not in cache:
            cache[rel] = read_lstg(ctx.path(rel))
        return cache[rel]

    out = []
    for r in read_catalog(ctx.catalog(f"sequences_{city}_L{lead}.jsonl")):
        if r["role"] in roles:
            out.append(SequenceSample(tuple(grid(p) for p in r["frames"]), grid(r["target"]), lead))
    return out


def _nowcast_ckpt(city: str, lead: int) -> str:
    return f"models/nowcast_{city}_L{lead}.zip"


def _subsample(items: list, cap: Optional[int], seed: int, label: str) -> list:
    if cap is None or len(items) <= cap:
        return items
    rng = np.random.default_rng(np.random.SeedSequence([seed, zlib.crc32(label.encode())]))
    idx = np.sort(rng.choice(len(items), size=cap, replace=False))
    return [items[i] for i in idx]


def cmd_train_nowcast(ctx: Context) -> int:
    canvas = ctx.cfg["canvas_size"]
    tcfg = ctx.train_config("nowcast")
    cap = ctx.cfg["nowcast_max_train_samples"]
    for city in _downscaled_cities(ctx):
        cache: dict = {}
        for lead in ctx.leads():
            tr = _load_sequences(ctx, city, lead, ("train",), cache)
            va = _load_sequences(ctx, city, lead, ("validation",), cache)
            if not tr or not va:
                raise DataError(f"{city} lead {lead}: empty training or validation sequences")
            tr = _subsample(tr, cap, tcfg.seed, f"train-{city}-{lead}")
            va = _subsample(va, cap, tcfg.seed, f"val-{city}-{lead}")
            model = build_convlstm(ConvLSTMSpec(width_factor=tcfg.width_factor), tcfg.seed)
            data_hash = _file_hash(ctx.catalog(f"sequences_{city}_L{lead}.jsonl"))
            ckpt, report = train(model, features.nowcast_dataset(tr, canvas),
                                 features.nowcast_dataset(va, canvas), tcfg, data_hash=data_hash)
            ckpt.extra = {"config_hash": ctx.hash, "overrides": ctx.overrides(), "canvas_size": canvas,
                          "city_id": city, "lead_minutes": lead, "report": report.to_dict()}
            path = ckpt_io.save(ckpt, ctx.path(_nowcast_ckpt(city, lead)))
            _upsert_model(ctx, {"kind": "model", "task": "nowcast", "city_id": city, "lead_minutes": lead,
                                "path": ctx.rel(path), "sha256": _file_hash(path), **ckpt.metrics})
            log.info("train-nowcast %s L%d: best epoch %d, val RMSE %.3f C", city, lead,
                     report.best_epoch, report.best_val_rmse_c)
    return 0


def cmd_nowcast(ctx: Context) -> int:
    for city in _downscaled_cities(ctx):
        cache: dict = {}
        for lead in ctx.leads():
            model, ckpt = _load_checkpoint(ctx, _nowcast_ckpt(city, lead))
            if ckpt.extra.get("lead_minutes") != lead or ckpt.extra.get("city_id") != city:
                raise ConfigurationError(f"checkpoint {_nowcast_ckpt(city, lead)} was trained for "
                                         f"{ckpt.extra.get('city_id')} lead {ckpt.extra.get('lead_minutes')}")
            seqs = _load_sequences(ctx, city, lead, ("test",), cache)
            records = []
            if seqs:
                pred = predict(model, features.nowcast_dataset(seqs, ckpt.extra["canvas_size"]).inputs)
                for s, p in zip(seqs, pred):
                    out = features.output_grid(p, s.target, "nowcast")
                    path = ctx.path(f"forecasts/{city}/L{lead}/{_stamp_name(s.target.time_utc)}.lstg")
                    write_lstg(path, out)
                    records.append(ctx.stamp({"kind": "forecast", "sample_id": s.sample_id, "city_id": city,
                                              "lead_minutes": lead, "issue_time_utc": s.time_utc.isoformat(),
                                              "valid_time_utc": s.target.time_utc.isoformat(),
                                              "path": ctx.rel(path)}))
            write_catalog(ctx.catalog(f"forecasts_{city}_L{lead}.jsonl"), records)
    return 0


def cmd_benchmark(ctx: Context) -> int:
    for city in _downscaled_cities(ctx):
        frames, paths = _load_frames(ctx, city)
        history = FrameHistory(frames)
        for lead in ctx.leads():
            records = []
            for s in _load_sequences(ctx, city, lead, ("test",)):
                base = {"sample_id": s.sample_id, "city_id": city, "lead_minutes": lead,
                        "issue_time_utc": s.time_utc.isoformat(),
                        "valid_time_utc": s.target.time_utc.isoformat(), "target": paths[s.target.time_utc]}
                try:
                    clim = climatological_rolling_median(history, s.time_utc, lead)
                except DataError as exc:
                    records.append(ctx.stamp({**base, "kind": "rejection", "reason": "climatology_history",
                                              "detail": str(exc)}))
                    continue
                pers = persistence(history, s.time_utc, lead)
                out = {}
                for name, g in (("persistence", pers), ("climatology", clim)):
                    path = ctx.path(f"benchmarks/{city}/L{lead}/{name}/{_stamp_name(g.time_utc)}.lstg")
                    write_lstg(path, g)
                    out[name] = ctx.rel(path)
                records.append(ctx.stamp({**base, "kind": "benchmark", **out}))
            write_catalog(ctx.catalog(f"benchmarks_{city}_L{lead}.jsonl"), records)
    return 0


METRIC_COLUMNS = ("r2", "rmse_c", "mae_c", "mbe_c", "pearson_rho", "n_pixels")


def downscale_eval_samples(ctx: Context) -> list[evalkit.EvalSample]:
    """Test-year pairs scored against the fine target, using the saved checkpoint."""
    model, ckpt = _load_checkpoint(ctx, DOWNSCALE_CKPT)
    canvas, k = ckpt.extra["canvas_size"], ckpt.extra["knn_k"]
    pairs = [p for _, p in _load_pairs(ctx, ("test",))]
    if not pairs:
        return []
    pred = predict(model, features.downscale_dataset(pairs, canvas, k).inputs)
    return [evalkit.EvalSample.from_grids(features.output_grid(y, p.fine, "downscaled"), p.fine, 0,
                                          ctx.offset(p.city_id))
            for p, y in zip(pairs, pred)]


def nowcast_cases(ctx: Context, city: str, lead: int) -> list[evalkit.ForecastCase]:
    """Benchmark cases for one city and lead, with the model forecast attached when it exists."""
    forecasts = {}
    fpath = ctx.catalog(f"forecasts_{city}_L{lead}.jsonl")
    if fpath.is_file():
        forecasts = {r["sample_id"]: r["path"] for r in read_catalog(fpath)}
    cases = []
    bpath = ctx.catalog(f"benchmarks_{city}_L{lead}.jsonl")
    if not bpath.is_file():
        return cases
    for r in read_catalog(bpath):
        if r["kind"] != "benchmark":
            continue
        model = read_lstg(ctx.path(forecasts[r["sample_id"]])).values if r["sample_id"] in forecasts else None
        cases.append(evalkit.ForecastCase(
            target=read_lstg(ctx.path(r["target"])).values, time_utc=parse_time(r["valid_time_utc"]),
            lead_minutes=lead, persistence=read_lstg(ctx.path(r["persistence"])).values,
            climatology=read_lstg(ctx.path(r["climatology"])).values, model=model,
            utc_offset_hours=ctx.offset(city)))
    return cases


def _metric_row(prefix: dict, m: evalkit.MetricSet) -> dict:
    return {**prefix, **m.to_dict()}


def cmd_evaluate(ctx: Context) -> int:
    out_dir = ctx.path("metrics")
    out_dir.mkdir(parents=True, exist_ok=True)
    wrote = False

    if ctx.path(DOWNSCALE_CKPT).is_file() and ctx.catalog("pairs.jsonl").is_file():
        samples = downscale_eval_samples(ctx)
        if samples:
            rows = [_metric_row({"stratum": "overall", "value": "all"}, evalkit.pooled_metrics(samples))]
            for key in ("city", "month", "local_hour", "day_night"):
                for label, m in evalkit.stratify(samples, key).strata.items():
                    rows.append(_metric_row({"stratum": key, "value": label}, m))
            (out_dir / "downscale_metrics.csv").write_text(
                evalkit.to_csv(rows, ("stratum", "value") + METRIC_COLUMNS), "utf-8")
            wrote = True

    nrows = []
    for city in ctx.cities(_cities_with(ctx, "downscaled_")):
        all_cases = []
        for lead in ctx.leads():
            cases = nowcast_cases(ctx, city, lead)
            if not cases:
                continue
            all_cases.extend(cases)
            predictors = ["persistence", "climatology"] + (["model"] if all(c.model is not None for c in cases) else [])
            for name in predictors:
                m = evalkit.metrics_from_pixels(*_stack(cases, name))
                nrows.append(_metric_row({"city_id": city, "lead_minutes": lead, "predictor": name}, m))
        if all_cases:
            (out_dir / f"diurnal_{city}.csv").write_text(evalkit.to_csv(evalkit.diurnal_curve(all_cases)), "utf-8")
    if nrows:
        (out_dir / "nowcast_metrics.csv").write_text(
            evalkit.to_csv(nrows, ("city_id", "lead_minutes", "predictor") + METRIC_COLUMNS), "utf-8")
        wrote = True
    if not wrote:
        raise DataError("nothing to evaluate: no test pairs and no benchmark cases")
    return 0


def _stack(cases: Sequence[evalkit.ForecastCase], name: str) -> tuple[np.ndarray, np.ndarray]:
    p = np.concatenate([np.ravel(getattr(c, name)) for c in cases])
    t = np.concatenate([np.ravel(c.target) for c in cases])
    ok = np.isfinite(p) & np.isfinite(t)
    return p[ok], t[ok]


COMMANDS = {
    "synth": (cmd_synth, "generate the synthetic world and write raw LSTG scenes"),
    "ingest": (cmd_ingest, "season-filter and range-check raw scenes"),
    "pair": (cmd_pair, "match fine scenes to coarse scenes and assign dataset roles"),
    "train-downscale": (cmd_train_downscale, "train the downscaling U-Net"),
    "downscale": (cmd_downscale, "apply the downscaling checkpoint to every coarse scene"),
    "build-sequences": (cmd_build_sequences, "assemble 3-frame nowcast windows per lead"),
    "train-nowcast": (cmd_train_nowcast, "train one nowcaster per city and lead"),
    "nowcast": (cmd_nowcast, "forecast the test sequences with the per-lead checkpoint"),
    "benchmark": (cmd_benchmark, "persistence and rolling-median climatology forecasts"),
    "evaluate": (cmd_evaluate, "write metric CSVs"),
}


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="thermocast", description="Urban LST downscaling and nowcasting pipeline.")
    parser.add_argument("--version", action="version", version=f"thermocast {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name, (_, help_text) in COMMANDS.items():
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", help="JSON config file (overrides the stored config.json)")
        p.add_argument("--city", help="restrict to one city id")
        p.add_argument("--lead", type=int, help="restrict to one lead time in minutes")
        p.add_argument("--out", help="data root (default: $THERMOCAST_DATA_DIR)")
        p.add_argument("--seed", type=int, help="override the configured seed")
        p.add_argument("--width-factor", type=float, dest="width_factor", help="scale every channel width")
        p.add_argument("-v", "--verbose", action="store_true")
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    try:
        args = build_parser().parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(message)s")
        ctx = Context(args, preset="desk" if args.command == "synth" else "default")
        return COMMANDS[args.command][0](ctx)
    except ThermocastError as exc:
        print(f"thermocast: {type(exc).__name__}: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
