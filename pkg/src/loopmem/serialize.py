"""Tensor serialization: a JSON manifest followed by a raw little-endian blob.

File layout:

    8-byte magic "LMTNSR01" | u64 manifest length (LE) | manifest JSON (UTF-8)
    | blob of raw values, little endian, in manifest order

The manifest is {"tensors": [{name, shape, dtype, byte_offset}, ...],
"extra": {...}} with dtype "f32" or "f64". Loading validates the total blob
length against the manifest and refuses partial loads.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

MAGIC = b"LMTNSR01"

_DTYPES = {"f32": np.dtype("<f4"), "f64": np.dtype("<f8")}


class CorruptCheckpointError(RuntimeError):
    """Raised when a serialized tensor file fails validation."""


def save_tensors(path: str | Path, tensors: dict[str, np.ndarray], extra: dict | None = None) -> None:
    """Write named arrays plus optional JSON-serializable metadata."""
    entries = []
    offset = 0
    blobs = []
    for name, arr in tensors.items():
        arr = np.asarray(arr)
        if arr.ndim > 0 and not arr.flags["C_CONTIGUOUS"]:
            arr = np.ascontiguousarray(arr)
        if arr.dtype == np.float32:
            dtype = "f32"
        elif arr.dtype == np.float64:
            dtype = "f64"
        else:
            raise ValueError(f"tensor {name!r} has unsupported dtype {arr.dtype}")
        raw = arr.astype(_DTYPES[dtype], copy=False).tobytes()
        entries.append({"name": name, "shape": list(arr.shape), "dtype": dtype,
                        "byte_offset": offset})
        blobs.append(raw)
        offset += len(raw)
    manifest = json.dumps({"tensors": entries, "extra": extra or {}},
                          sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<Q", len(manifest)))
        fh.write(manifest)
        for raw in blobs:
            fh.write(raw)


def load_tensors(path: str | Path) -> tuple[dict[str, np.ndarray], dict]:
    """Read back (tensors, extra). Raises CorruptCheckpointError on mismatch."""
    with open(path, "rb") as fh:
        head = fh.read(len(MAGIC) + 8)
        if len(head) < len(MAGIC) + 8 or head[: len(MAGIC)] != MAGIC:
            raise CorruptCheckpointError(f"{path}: bad magic or truncated header")
        (manifest_len,) = struct.unpack("<Q", head[len(MAGIC):])
        manifest_raw = fh.read(manifest_len)
        if len(manifest_raw) != manifest_len:
            raise CorruptCheckpointError(f"{path}: truncated manifest")
        try:
            manifest = json.loads(manifest_raw.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise CorruptCheckpointError(f"{path}: unreadable manifest: {exc}") from exc
        blob = fh.read()

    entries = manifest.get("tensors", [])
    expected = 0
    for e in entries:
        n = int(np.prod(e["shape"])) if e["shape"] else 1
        expected = max(expected, e["byte_offset"] + n * _DTYPES[e["dtype"]].itemsize)
    if len(blob) != expected:
        raise CorruptCheckpointError(
            f"{path}: blob length {len(blob)} does not match manifest total {expected}")

    tensors: dict[str, np.ndarray] = {}
    for e in entries:
        dt = _DTYPES[e["dtype"]]
        shape = tuple(e["shape"])
        n = int(np.prod(shape)) if shape else 1
        start = e["byte_offset"]
        arr = np.frombuffer(blob, dtype=dt, count=n, offset=start).reshape(shape)
        tensors[e["name"]] = arr.copy()
    return tensors, manifest.get("extra", {})
