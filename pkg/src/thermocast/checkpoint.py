"""Deterministic checkpoint archives.

An archive is a stored (uncompressed) zip with ``manifest.json`` and one raw
little-endian float64 buffer per parameter under ``params/<name>.f64``.
Entries are sorted and stamped with a fixed date so identical weights give
identical bytes. The manifest carries a SHA-256 over its own canonical JSON
(minus the hash field) and one per parameter buffer.
"""

from __future__ import annotations

import hashlib
import io
import json
import os
import zipfile
from pathlib import Path
from typing import Optional

import numpy as np

from thermocast.errors import ConfigurationError, DataError
from thermocast.models import Model, build_model
from thermocast.training import Checkpoint, TrainConfig

FORMAT = "thermocast-checkpoint/1"
_EPOCH = (1980, 1, 1, 0, 0, 0)


def canonical_json(obj) -> bytes:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), allow_nan=False).encode()


def _entry(name: str) -> zipfile.ZipInfo:
    info = zipfile.ZipInfo(name, date_time=_EPOCH)
    info.compress_type = zipfile.ZIP_STORED
    info.external_attr = 0o644 << 16
    return info


def _manifest_hash(manifest: dict) -> str:
    body = {k: v for k, v in manifest.items() if k != "manifest_sha256"}
    return hashlib.sha256(canonical_json(body)).hexdigest()


def _clean(value):
    if isinstance(value, float) and not np.isfinite(value):
        return None
    if isinstance(value, dict):
        return {k: _clean(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_clean(v) for v in value]
    if isinstance(value, np.generic):
        return value.item()
    return value


def to_bytes(ckpt: Checkpoint) -> bytes:
    buffers = {}
    entries = []
    for name in sorted(ckpt.state):
        raw = np.ascontiguousarray(ckpt.state[name], dtype="<f8").tobytes()
        buffers[name] = raw
        entries.append({"name": name, "shape": list(np.shape(ckpt.state[name])),
                        "sha256": hashlib.sha256(raw).hexdigest()})
    config = ckpt.config.to_dict()
    manifest = {
        "format": FORMAT,
        "architecture": ckpt.architecture,
        "config": config,
        "normalization": {"lst_offset": config["lst_offset"], "lst_scale": config["lst_scale"],
                          "sza_encoding": "cos"},
        "seed": ckpt.seed,
        "data_hash": ckpt.data_hash,
        "metrics": _clean(ckpt.metrics),
        "extra": _clean(ckpt.extra),
        "parameters": entries,
    }
    manifest["manifest_sha256"] = _manifest_hash(manifest)

    out = io.BytesIO()
    with zipfile.ZipFile(out, "w", zipfile.ZIP_STORED) as zf:
        zf.writestr(_entry("manifest.json"), json.dumps(manifest, sort_keys=True, indent=1).encode())
        for name in sorted(buffers):
            zf.writestr(_entry(f"params/{name}.f64"), buffers[name])
    return out.getvalue()


def save(ckpt: Checkpoint, path) -> Path:
    """Write atomically (temp file + rename)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(to_bytes(ckpt))
    os.replace(tmp, path)
    return path


def from_bytes(blob: bytes) -> Checkpoint:
    try:
        zf = zipfile.ZipFile(io.BytesIO(blob))
    except zipfile.BadZipFile as exc:
        raise DataError(f"not a checkpoint archive: {exc}") from exc
    with zf:
        try:
            manifest = json.loads(zf.read("manifest.json"))
        except KeyError as exc:
            raise ConfigurationError("checkpoint has no manifest.json") from exc
        if manifest.get("format") != FORMAT:
            raise ConfigurationError(f"unsupported checkpoint format {manifest.get('format')!r}")
        if manifest.get("manifest_sha256") != _manifest_hash(manifest):
            raise ConfigurationError("checkpoint manifest hash mismatch; refusing to load")
        state = {}
        for entry in manifest["parameters"]:
            name = entry["name"]
            try:
                raw = zf.read(f"params/{name}.f64")
            except KeyError as exc:
                raise ConfigurationError(f"checkpoint lacks buffer for {name}") from exc
            if hashlib.sha256(raw).hexdigest() != entry["sha256"]:
                raise ConfigurationError(f"parameter buffer {name} hash mismatch")
            shape = tuple(entry["shape"])
            if len(raw) != 8 * int(np.prod(shape, dtype=np.int64)):
                raise ConfigurationError(f"parameter {name}: buffer length does not match shape {shape}")
            state[name] = np.frombuffer(raw, dtype="<f8").reshape(shape).astype(np.float64)
    return Checkpoint(architecture=manifest["architecture"], state=state,
                      config=TrainConfig.from_dict(manifest["config"]), seed=int(manifest["seed"]),
                      metrics=manifest.get("metrics", {}), data_hash=manifest.get("data_hash", ""),
                      extra=manifest.get("extra", {}))


def load(path) -> Checkpoint:
    path = Path(path)
    if not path.is_file():
        raise ConfigurationError(f"checkpoint not found: {path}")
    return from_bytes(path.read_bytes())


def load_model(path, expect_architecture: Optional[dict] = None) -> tuple[Model, Checkpoint]:
    """Rebuild the model a checkpoint describes and load its weights.

    With ``expect_architecture`` the stored architecture must match exactly,
    otherwise a :class:`ConfigurationError` is raised before any weights load.
    """
    ckpt = load(path)
    if expect_architecture is not None and canonical_json(expect_architecture) != canonical_json(ckpt.architecture):
        raise ConfigurationError(f"architecture mismatch: checkpoint {ckpt.architecture}, "
                                 f"expected {expect_architecture}")
    model = build_model(ckpt.architecture, ckpt.seed)
    model.load_state_dict(ckpt.state)
    return model, ckpt


def load_into(model: Model, path) -> Checkpoint:
    """Load weights into an existing model; shapes and names must match."""
    ckpt = load(path)
    if canonical_json(model.architecture()) != canonical_json(ckpt.architecture):
        raise ConfigurationError(f"architecture mismatch: model {model.architecture()}, "
                                 f"checkpoint {ckpt.architecture}")
    model.load_state_dict(ckpt.state)
    return ckpt
