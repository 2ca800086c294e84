import json
import shutil
from datetime import datetime, timedelta, timezone
from pathlib import Path

import numpy as np
import pytest

from thermocast import cli, evalkit, io
from thermocast import config as cfgmod
from thermocast.benchmarks import FrameHistory, persistence
from thermocast.errors import ConfigurationError
from thermocast.geogrid import Grid, GridSpec

STEPS = ["synth", "ingest", "pair", "train-downscale", "downscale", "build-sequences",
         "train-nowcast", "nowcast", "benchmark", "evaluate"]

TINY = {
    "preset": "desk",
    "synth": {"days": 12},
    "lead_times": [15, 30],
    "nowcast_max_train_samples": 64,
    "downscale": {"max_epochs": 2, "width_factor": 0.125},
    "nowcast": {"max_epochs": 1, "width_factor": 0.125},
}


def write_config(path: Path, cfg: dict) -> str:
    path.write_text(json.dumps(cfg))
    return str(path)


def run_pipeline(root: Path, config_path: str, steps=STEPS) -> list[int]:
    codes = []
    for step in steps:
        args = [step, "--out", str(root)]
        if step == "synth":
            args += ["--config", config_path]
        codes.append(cli.main(args))
    return codes


def tree_bytes(root: Path) -> dict:
    return {p.relative_to(root).as_posix(): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    base = tmp_path_factory.mktemp("pipeline")
    root = base / "root"
    codes = run_pipeline(root, write_config(base / "tiny.json", TINY))
    return root, codes


# -- configuration ---------------------------------------------------------------------------------

def test_defaults_match_published_settings():
    cfg = cfgmod.default_config()
    th = cfg["thresholds"]
    assert (th["min_fine_coverage"], th["min_coarse_coverage"], th["min_overlap"], th["city_cap"]) == (0.5, 0.8, 0.7, 1500)
    assert cfg["season"] == {"start": [5, 15], "end": [9, 15]}
    assert cfg["lead_times"] == [15, 30, 45, 60, 75]
    assert cfg["canvas_size"] == 128 and cfg["knn_k"] == 5
    assert cfg["downscale"]["lr"] == 2e-5 and cfg["nowcast"]["batch_size"] == 128


def test_desk_preset_runs_small():
    cfg = cfgmod.load_config(None, "desk")
    assert cfg["canvas_size"] == 16 and cfg["synth"]["noise_sigma_c"] == 0.5 and cfg["synth"]["days"] == 60
    assert cfgmod.diff(cfgmod.default_config(), cfg)["canvas_size"] == 16


def test_override_file_merges(tmp_path):
    path = write_config(tmp_path / "c.json", {"knn_k": 7, "downscale": {"lr": 0.01}})
    cfg = cfgmod.load_config(path)
    assert cfg["knn_k"] == 7 and cfg["downscale"]["lr"] == 0.01
    assert cfg["downscale"]["batch_size"] == 32
    assert cfgmod.diff(cfgmod.default_config(), cfg) == {"knn_k": 7, "downscale.lr": 0.01}


@pytest.mark.parametrize("override,match", [
    ({"knn": 5}, "unknown"),
    ({"thresholds": {"min_cover": 0.5}}, "thresholds.min_cover"),
    ({"lead_times": [20]}, "lead"),
    ({"canvas_size": 24}, "canvas"),
    ({"nowcast": {"batch_size": 0}}, "nowcast"),
    ({"synth": {"ar_coef": 1.5}, "preset": "desk"}, "synth"),
    ({"preset": "huge"}, "preset"),
])
def test_bad_config_refused(tmp_path, override, match):
    path = write_config(tmp_path / "c.json", override)
    with pytest.raises(ConfigurationError, match=match):
        cfgmod.load_config(path)


def test_unreadable_config(tmp_path):
    with pytest.raises(ConfigurationError):
        cfgmod.load_config(str(tmp_path / "absent.json"))
    bad = tmp_path / "list.json"
    bad.write_text("[1, 2]")
    with pytest.raises(ConfigurationError):
        cfgmod.load_config(str(bad))


def test_config_hash_stable_and_sensitive():
    a, b = cfgmod.load_config(), cfgmod.load_config()
    assert cfgmod.config_hash(a) == cfgmod.config_hash(b)
    assert len(cfgmod.config_hash(a)) == 16
    assert cfgmod.config_hash(cfgmod.apply_cli(a, seed=1)) != cfgmod.config_hash(a)


def test_apply_cli_overrides_every_block():
    cfg = cfgmod.apply_cli(cfgmod.load_config(), seed=9, width_factor=0.5)
    assert cfg["seed"] == cfg["downscale"]["seed"] == cfg["nowcast"]["seed"] == 9
    assert cfg["downscale"]["width_factor"] == cfg["nowcast"]["width_factor"] == 0.5


# -- command line --------------------------------------------------------------------------------------

def test_pipeline_smoke(pipeline):
    root, codes = pipeline
    assert codes == [0] * len(STEPS)
    for name in ("downscale.zip", "nowcast_synthburg_L15.zip", "nowcast_synthburg_L30.zip"):
        assert (root / "models" / name).is_file()
    text = (root / "metrics" / "nowcast_metrics.csv").read_text().splitlines()
    assert text[0].startswith("city_id,lead_minutes,predictor,r2,rmse_c")
    assert len(text) == 1 + 2 * 3
    assert (root / "metrics" / "downscale_metrics.csv").is_file()


def test_every_record_traceable(pipeline):
    root, _ = pipeline
    cfg = json.loads((root / "config.json").read_text())
    h = cfgmod.config_hash(cfg)
    for cat in (root / "catalogs").glob("*.jsonl"):
        for r in io.read_catalog(cat):
            assert r["config_hash"] == h and r["seed"] == 0, cat.name
            for key in ("path", "fine", "coarse", "sza", "target"):
                if r.get(key):
                    assert (root / r[key]).is_file()


def test_rerun_is_byte_identical(pipeline, tmp_path):
    root, _ = pipeline
    copy = tmp_path / "copy"
    shutil.copytree(root, copy)
    before = tree_bytes(copy)
    for step in STEPS[1:]:
        assert cli.main([step, "--out", str(copy)]) == 0
    assert tree_bytes(copy) == before


def test_nowcast_loads_only_requested_lead(pipeline, tmp_path):
    root, _ = pipeline
    copy = tmp_path / "copy"
    shutil.copytree(root, copy)
    (copy / "models" / "nowcast_synthburg_L30.zip").unlink()
    assert cli.main(["nowcast", "--out", str(copy), "--lead", "15"]) == 0
    assert cli.main(["nowcast", "--out", str(copy)]) == 3
    shutil.copy(copy / "models" / "nowcast_synthburg_L15.zip", copy / "models" / "nowcast_synthburg_L30.zip")
    assert cli.main(["nowcast", "--out", str(copy), "--lead", "30"]) == 3


def test_missing_downscale_checkpoint_is_config_error(pipeline, tmp_path, capsys):
    root, _ = pipeline
    copy = tmp_path / "copy"
    shutil.copytree(root, copy)
    (copy / "models" / "downscale.zip").unlink()
    assert cli.main(["downscale", "--out", str(copy)]) == 3
    assert "missing checkpoint" in capsys.readouterr().err


def test_empty_pair_catalog_is_data_error(tmp_path):
    root = tmp_path / "root"
    io.write_catalog(root / "catalogs" / "pairs.jsonl",
                     [{"kind": "rejection", "reason": "fine_coverage", "city_id": "x"}])
    assert cli.main(["train-downscale", "--out", str(root)]) == 2


@pytest.mark.parametrize("step", ["build-sequences", "train-nowcast", "nowcast", "benchmark", "evaluate", "ingest"])
def test_steps_on_empty_root_are_data_errors(tmp_path, step):
    assert cli.main([step, "--out", str(tmp_path)]) == 2


def test_usage_errors_exit_3(tmp_path, monkeypatch):
    monkeypatch.delenv("THERMOCAST_DATA_DIR", raising=False)
    assert cli.main(["pair"]) == 3
    assert cli.main(["frobnicate", "--out", str(tmp_path)]) == 3
    assert cli.main(["build-sequences", "--out", str(tmp_path), "--lead", "20"]) == 3
    bad = write_config(tmp_path / "c.json", {"knn": 1})
    assert cli.main(["synth", "--out", str(tmp_path), "--config", bad]) == 3


def test_data_root_from_environment(pipeline, tmp_path, monkeypatch):
    root, _ = pipeline
    copy = tmp_path / "copy"
    shutil.copytree(root, copy)
    monkeypatch.setenv("THERMOCAST_DATA_DIR", str(copy))
    assert cli.main(["evaluate"]) == 0


def make_scene(root, product, t, values):
    spec = GridSpec(52.65, 13.25, 10, 10)
    path = root / "scenes" / product / f"{t:%H%M}.lstg"
    io.write_lstg(path, Grid(spec, "lst_c", t, values, city_id="c", source=product))
    return {"kind": "scene", "product": product, "path": path.relative_to(root).as_posix(), "city_id": "c",
            "time_utc": t.isoformat()}


def test_pair_rejects_coarse_coverage_079(tmp_path):
    root = tmp_path / "root"
    day = datetime(2012, 7, 1, tzinfo=timezone.utc)
    full = np.full((10, 10), 25.0)

    def holes(valid_cells):
        v = full.copy().ravel()
        v[valid_cells:] = np.nan
        return v.reshape(10, 10)

    records = [make_scene(root, "fine", day + timedelta(hours=12), full),
               make_scene(root, "coarse", day + timedelta(hours=12, minutes=5), holes(79)),
               make_scene(root, "fine", day + timedelta(hours=18), full),
               make_scene(root, "coarse", day + timedelta(hours=18, minutes=5), holes(80))]
    io.write_catalog(root / "catalogs" / "scenes.jsonl", records)
    assert cli.main(["pair", "--out", str(root)]) == 0
    out = io.read_catalog(root / "catalogs" / "pairs.jsonl")
    by_time = {r["time_utc"][11:16]: r for r in out}
    assert by_time["12:00"]["kind"] == "rejection" and by_time["12:00"]["reason"] == "coarse_coverage"
    assert by_time["12:00"]["coarse_coverage"] == pytest.approx(0.79)
    assert by_time["18:00"]["kind"] == "pair" and by_time["18:00"]["coarse_coverage"] == pytest.approx(0.80)


def test_evaluate_matches_in_process(pipeline):
    """Persistence metrics from the CSV equal a direct in-memory computation."""
    root, _ = pipeline
    frames = [io.read_lstg(root / r["path"])
              for r in io.read_catalog(root / "catalogs" / "downscaled_synthburg.jsonl") if r["kind"] == "frame"]
    history = FrameHistory(frames)
    rows = {(int(r[1]), r[2]): r for r in
            (line.split(",") for line in (root / "metrics" / "nowcast_metrics.csv").read_text().splitlines()[1:])}
    for lead in (15, 30):
        preds, targets = [], []
        for r in io.read_catalog(root / "catalogs" / f"benchmarks_synthburg_L{lead}.jsonl"):
            if r["kind"] != "benchmark":
                continue
            issue = datetime.fromisoformat(r["issue_time_utc"])
            preds.append(persistence(history, issue, lead).values)
            targets.append(history[issue + timedelta(minutes=lead)].values)
        m = evalkit.compute_metrics(np.stack(preds), np.stack(targets))
        row = rows[(lead, "persistence")]
        assert float(row[4]) == pytest.approx(m.rmse_c, abs=5e-7)
        assert float(row[5]) == pytest.approx(m.mae_c, abs=5e-7)
        assert int(row[8]) == m.n_pixels
