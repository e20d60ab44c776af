"""Versioned binary container for named arrays plus a JSON metadata block.

Layout: 4-byte magic ``WSSL``, u32 format version, u64 header length, the
header JSON (sorted keys, compact), then raw little-endian array payloads
back to back.  Nothing time- or environment-dependent is written, so saving
the same arrays and metadata twice yields byte-identical files.  Checkpoints
and window stores both ride on this.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

MAGIC = b"WSSL"
VERSION = 1

_ALLOWED_DTYPES = ("<f8", "<f4", "<i8", "<i4", "|u1")


class ContainerError(Exception):
    """Raised for malformed or truncated container files."""


def save_arrays(path, arrays: dict[str, np.ndarray], meta: dict | None = None) -> None:
    """Write ``arrays`` (stored in sorted name order) and ``meta`` to ``path``."""
    entries = []
    payloads = []
    offset = 0
    for name in sorted(arrays):
        if not isinstance(name, str) or not name:
            raise ContainerError(f"array names must be non-empty strings, got {name!r}")
        arr = np.ascontiguousarray(arrays[name])
        dtype = arr.dtype.newbyteorder("<").str if arr.dtype.byteorder == ">" else arr.dtype.str
        if dtype == "<f2" or dtype not in _ALLOWED_DTYPES:
            # normalize anything exotic to float64
            arr = arr.astype(np.float64)
            dtype = "<f8"
        arr = arr.astype(np.dtype(dtype), copy=False)
        raw = arr.tobytes()
        entries.append({"name": name, "dtype": dtype, "shape": list(arr.shape),
                        "offset": offset, "nbytes": len(raw)})
        payloads.append(raw)
        offset += len(raw)
    header = {"meta": meta or {}, "arrays": entries}
    header_bytes = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", VERSION))
        fh.write(struct.pack("<Q", len(header_bytes)))
        fh.write(header_bytes)
        for raw in payloads:
            fh.write(raw)


def load_arrays(path) -> tuple[dict[str, np.ndarray], dict]:
    """Read a container; returns (arrays, meta)."""
    data = Path(path).read_bytes()
    if len(data) < 16 or data[:4] != MAGIC:
        raise ContainerError(f"{path}: not a WSSL container")
    (version,) = struct.unpack("<I", data[4:8])
    if version != VERSION:
        raise ContainerError(f"{path}: unsupported container version {version}")
    (header_len,) = struct.unpack("<Q", data[8:16])
    if 16 + header_len > len(data):
        raise ContainerError(f"{path}: truncated header")
    try:
        header = json.loads(data[16:16 + header_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise ContainerError(f"{path}: bad header: {e}") from None
    payload = data[16 + header_len:]
    arrays = {}
    for entry in header["arrays"]:
        dtype = entry["dtype"]
        if dtype not in _ALLOWED_DTYPES:
            raise ContainerError(f"{path}: disallowed dtype {dtype!r}")
        start, nbytes = entry["offset"], entry["nbytes"]
        if start + nbytes > len(payload):
            raise ContainerError(f"{path}: truncated payload for {entry['name']!r}")
        arr = np.frombuffer(payload[start:start + nbytes], dtype=np.dtype(dtype))
        arrays[entry["name"]] = arr.reshape(entry["shape"]).copy()
    return arrays, header["meta"]
