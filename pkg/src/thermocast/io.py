"""LSTG raster files and JSON-lines catalogs.

LSTG layout::

    b"LSTG1\\n"
    uint64 little-endian header length
    UTF-8 JSON header {grid, time_utc, variable, city_id, source}
    rows * cols float32 little-endian, row-major north to south, NaN = missing
"""

from __future__ import annotations

import json
import os
import struct
from pathlib import Path
from typing import Iterable, Union

import numpy as np

from thermocast.errors import DataError
from thermocast.geogrid.grid import VARIABLES, Grid, GridSpec, format_time, parse_time

MAGIC = b"LSTG1\n"
_LEN = struct.Struct("<Q")

PathLike = Union[str, os.PathLike]


def encode_grid(grid: Grid) -> bytes:
    header = {"grid": grid.spec.to_dict(), "time_utc": format_time(grid.time_utc),
              "variable": grid.variable, "city_id": grid.city_id, "source": grid.source}
    head = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    payload = np.ascontiguousarray(grid.values, dtype="<f4").tobytes()
    return MAGIC + _LEN.pack(len(head)) + head + payload


def decode_grid(blob: bytes, origin: str = "<bytes>") -> Grid:
    if not blob.startswith(MAGIC):
        raise DataError(f"{origin}: bad magic, not an LSTG file")
    pos = len(MAGIC)
    if len(blob) < pos + _LEN.size:
        raise DataError(f"{origin}: truncated header length")
    (n,) = _LEN.unpack_from(blob, pos)
    pos += _LEN.size
    try:
        header = json.loads(blob[pos:pos + n].decode("utf-8"))
        spec = GridSpec.from_dict(header["grid"])
        variable = header["variable"]
        time_utc = parse_time(header["time_utc"])
    except (ValueError, KeyError, TypeError) as exc:
        raise DataError(f"{origin}: unreadable header ({exc})") from exc
    if variable not in VARIABLES:
        raise DataError(f"{origin}: unknown variable {variable!r}")
    pos += n
    payload = blob[pos:]
    if len(payload) != 4 * spec.rows * spec.cols:
        raise DataError(f"{origin}: payload has {len(payload)} bytes, expected {4 * spec.rows * spec.cols}")
    values = np.frombuffer(payload, dtype="<f4").reshape(spec.shape).astype(np.float64)
    return Grid(spec, variable, time_utc, values, header.get("city_id", ""), header.get("source", ""))


def atomic_write(path: PathLike, data: bytes) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(data)
    os.replace(tmp, path)
    return path


def write_lstg(path: PathLike, grid: Grid) -> Path:
    return atomic_write(path, encode_grid(grid))


def read_lstg(path: PathLike) -> Grid:
    path = Path(path)
    try:
        blob = path.read_bytes()
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    return decode_grid(blob, str(path))


def catalog_line(record: dict) -> str:
    return json.dumps(record, sort_keys=True, separators=(",", ":"), allow_nan=False)


def write_catalog(path: PathLike, records: Iterable[dict]) -> Path:
    """Write a whole catalog through a temp file and rename."""
    text = "".join(catalog_line(r) + "\n" for r in records)
    return atomic_write(path, text.encode("utf-8"))


def append_catalog(path: PathLike, records: Iterable[dict]) -> Path:
    """Append records by rewriting existing lines plus the new ones atomically."""
    path = Path(path)
    old = path.read_bytes() if path.exists() else b""
    new = "".join(catalog_line(r) + "\n" for r in records).encode("utf-8")
    return atomic_write(path, old + new)


def read_catalog(path: PathLike) -> list[dict]:
    path = Path(path)
    if not path.is_file():
        raise DataError(f"catalog not found: {path}")
    out = []
    for i, line in enumerate(path.read_text("utf-8").splitlines(), start=1):
        if not line.strip():
            continue
        try:
            out.append(json.loads(line))
        except json.JSONDecodeError as exc:
            raise DataError(f"{path}:{i}: malformed catalog line") from exc
    return out


def resolve(catalog_path: PathLike, relative: str) -> Path:
    return Path(catalog_path).parent / relative
