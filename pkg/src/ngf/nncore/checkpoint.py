"""Checkpoint files: ``b"NGFW"``, u64 header length, JSON header, float64 arrays.

The header lists ``parameters`` as ``[{"name", "shape"}]``; arrays follow in
that order as little-endian float64.
"""
from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

MAGIC = b"NGFW"


def save_checkpoint(path, header: dict, arrays: dict) -> None:
    header = dict(header)
    names = list(arrays)
    header["parameters"] = [{"name": k, "shape": list(np.shape(arrays[k]))} for k in names]
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<Q", len(blob)))
        fh.write(blob)
        for k in names:
            fh.write(np.ascontiguousarray(arrays[k], dtype="<f8").tobytes())


def load_checkpoint(path):
    """Return ``(header, arrays)``."""
    raw = Path(path).read_bytes()
    if raw[:4] != MAGIC:
        raise ValueError(f"{path}: not a checkpoint (magic {raw[:4]!r})")
    (n,) = struct.unpack_from("<Q", raw, 4)
    header = json.loads(raw[12:12 + n].decode("utf-8"))
    offset = 12 + n
    arrays = {}
    for entry in header["parameters"]:
        shape = tuple(entry["shape"])
        count = int(np.prod(shape)) if shape else 1
        arrays[entry["name"]] = np.frombuffer(raw, "<f8", count, offset).astype(np.float64).reshape(shape)
        offset += 8 * count
    if offset != len(raw):
        raise ValueError(f"{path}: {len(raw) - offset} trailing bytes")
    return header, arrays
