"""Checkpoint blobs: a JSON manifest plus a packed little-endian f32 file.

Record layout, repeated in manifest order:

    u32 name_len | name (utf-8) | u32 rank | u32 dims[rank] | f32 payload
"""
from __future__ import annotations

import json
import struct
from pathlib import Path
from typing import Mapping

import numpy as np

MANIFEST = "manifest.json"
BLOB = "tensors.bin"


def pack_records(tensors: Mapping[str, np.ndarray]) -> bytes:
    out = bytearray()
    for name, arr in tensors.items():
        arr = np.asarray(arr)
        raw = name.encode("utf-8")
        out += struct.pack("<I", len(raw)) + raw
        out += struct.pack("<I", arr.ndim)
        out += struct.pack(f"<{arr.ndim}I", *arr.shape)
        out += np.ascontiguousarray(arr, dtype="<f4").tobytes()
    return bytes(out)


def unpack_records(blob: bytes) -> dict[str, np.ndarray]:
    out: dict[str, np.ndarray] = {}
    pos = 0
    while pos < len(blob):
        (n,) = struct.unpack_from("<I", blob, pos)
        pos += 4
        name = blob[pos:pos + n].decode("utf-8")
        pos += n
        (rank,) = struct.unpack_from("<I", blob, pos)
        pos += 4
        dims = struct.unpack_from(f"<{rank}I", blob, pos)
        pos += 4 * rank
        count = int(np.prod(dims)) if rank else 1
        arr = np.frombuffer(blob, dtype="<f4", count=count, offset=pos).reshape(dims)
        pos += 4 * count
        out[name] = arr.astype(np.float32)
    return out


def save_checkpoint(path, tensors: Mapping[str, np.ndarray], meta: dict | None = None) -> Path:
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    (path / BLOB).write_bytes(pack_records(tensors))
    manifest = {"format": "mra-ckpt-1", "records": list(tensors.keys()), "meta": meta or {}}
    (path / MANIFEST).write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return path


def load_checkpoint(path) -> tuple[dict[str, np.ndarray], dict]:
    path = Path(path)
    manifest = json.loads((path / MANIFEST).read_text())
    records = unpack_records((path / BLOB).read_bytes())
    if list(records) != manifest["records"]:
        raise ValueError(f"checkpoint {path}: blob records disagree with manifest order")
    return records, manifest.get("meta", {})
