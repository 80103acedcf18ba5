"""MOVT binary tensor cache.

Layout: ``b"MOVT"``, version byte, rank byte, ``rank`` little-endian u32
extents, then the row-major data as little-endian float64.
"""

from __future__ import annotations

import json
import os
import struct
from pathlib import Path
from typing import Mapping

import numpy as np

MAGIC = b"MOVT"
VERSION = 1


class MovtError(ValueError):
    pass


def dumps(arr) -> bytes:
    arr = np.ascontiguousarray(arr, dtype="<f8")
    if arr.ndim > 255:
        raise MovtError("rank too large")
    header = MAGIC + struct.pack("<BB", VERSION, arr.ndim)
    header += struct.pack(f"<{arr.ndim}I", *arr.shape)
    return header + arr.tobytes()


def loads(buf: bytes) -> np.ndarray:
    if buf[:4] != MAGIC:
        raise MovtError("bad magic")
    version, rank = struct.unpack_from("<BB", buf, 4)
    if version != VERSION:
        raise MovtError(f"unsupported MOVT version {version}")
    off = 6
    shape = struct.unpack_from(f"<{rank}I", buf, off)
    off += 4 * rank
    count = int(np.prod(shape)) if rank else 1
    if len(buf) - off != 8 * count:
        raise MovtError("payload size does not match header")
    return np.frombuffer(buf, dtype="<f8", count=count, offset=off).reshape(shape).astype(np.float64)


def save(path, arr):
    path = Path(path)
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_bytes(dumps(arr))
    os.replace(tmp, path)


def load(path) -> np.ndarray:
    return loads(Path(path).read_bytes())


def save_bundle(directory, tensors: Mapping[str, np.ndarray], meta: Mapping | None = None):
    """Write named tensors as individual .movt files plus ``manifest.json``."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    entries = []
    for name, arr in tensors.items():
        fname = f"{name}.movt"
        save(directory / fname, arr)
        entry = {"name": name, "file": fname, "shape": list(np.shape(arr))}
        if meta and name in meta:
            entry.update(meta[name])
        entries.append(entry)
    (directory / "manifest.json").write_text(json.dumps({"version": VERSION, "tensors": entries}, indent=1))


def load_bundle(directory) -> tuple[dict[str, np.ndarray], dict[str, dict]]:
    directory = Path(directory)
    manifest = json.loads((directory / "manifest.json").read_text())
    tensors, meta = {}, {}
    for entry in manifest["tensors"]:
        arr = load(directory / entry["file"])
        if list(arr.shape) != entry["shape"]:
            raise MovtError(f"{entry['name']}: shape mismatch with manifest")
        tensors[entry["name"]] = arr
        meta[entry["name"]] = {k: v for k, v in entry.items() if k not in ("name", "file", "shape")}
    return tensors, meta
