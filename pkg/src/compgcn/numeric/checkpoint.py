"""Checkpoint container: magic header, JSON manifest, then raw little-endian f64 arrays.

Layout::

    b"CGCNCKPT" | u32 version | u64 manifest length | manifest JSON | data

The manifest maps each array name to ``{"shape": [...], "offset": bytes}`` where
the offset is relative to the start of the data block.
"""
from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

MAGIC = b"CGCNCKPT"
VERSION = 1


class CheckpointError(ValueError):
    pass


def save_checkpoint(path, arrays: dict[str, np.ndarray], meta: dict | None = None) -> None:
    entries = {}
    blobs = []
    offset = 0
    for name in sorted(arrays):
        a = np.asarray(arrays[name], dtype="<f8")
        entries[name] = {"shape": list(a.shape), "offset": offset}
        blob = a.tobytes(order="C")
        blobs.append(blob)
        offset += len(blob)
    manifest = json.dumps({"arrays": entries, "meta": meta or {}}, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<IQ", VERSION, len(manifest)))
        fh.write(manifest)
        for blob in blobs:
            fh.write(blob)


def load_checkpoint(path) -> tuple[dict[str, np.ndarray], dict]:
    raw = Path(path).read_bytes()
    if raw[:len(MAGIC)] != MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint (bad magic)")
    version, mlen = struct.unpack_from("<IQ", raw, len(MAGIC))
    if version != VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint version {version}")
    start = len(MAGIC) + struct.calcsize("<IQ")
    manifest = json.loads(raw[start:start + mlen].decode("utf-8"))
    data = raw[start + mlen:]
    arrays = {}
    for name, entry in manifest["arrays"].items():
        shape = tuple(entry["shape"])
        count = int(np.prod(shape)) if shape else 1
        a = np.frombuffer(data, dtype="<f8", count=count, offset=entry["offset"])
        arrays[name] = a.reshape(shape).astype(np.float64)
    return arrays, manifest.get("meta", {})
