"""Tensor archive: a small self-describing container for float32 arrays.

Layout::

    8 bytes   magic  b"LSRNATA1"
    8 bytes   header length N, unsigned little-endian
    N bytes   UTF-8 JSON header {"entries": [...], "meta": {...}}
    ...       raw little-endian float32 payloads, concatenated in entry order

Each header entry records ``name``, ``dtype`` (always ``"<f4"``), ``shape``,
``offset`` (relative to the start of the payload) and ``nbytes``.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path
from typing import Any, Mapping

import numpy as np

MAGIC = b"LSRNATA1"
DTYPE = "<f4"


class ArchiveError(ValueError):
    pass


def save_archive(path: str | Path, tensors: Mapping[str, Any], meta: Mapping[str, Any] | None = None) -> Path:
    path = Path(path)
    entries = []
    blobs = []
    offset = 0
    for name, value in tensors.items():
        if hasattr(value, "detach"):  # torch tensor
            value = value.detach().cpu().numpy()
        arr = np.array(value, dtype=DTYPE, order="C")  # ascontiguousarray would lift 0-d to 1-d
        raw = arr.tobytes()
        entries.append({"name": name, "dtype": DTYPE, "shape": list(arr.shape),
                        "offset": offset, "nbytes": len(raw)})
        blobs.append(raw)
        offset += len(raw)
    header = json.dumps({"entries": entries, "meta": dict(meta or {})}, sort_keys=True).encode()
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<Q", len(header)))
        fh.write(header)
        for raw in blobs:
            fh.write(raw)
    return path


def load_archive(path: str | Path) -> tuple[dict[str, np.ndarray], dict[str, Any]]:
    data = Path(path).read_bytes()
    if data[:8] != MAGIC:
        raise ArchiveError(f"{path}: not a tensor archive (bad magic)")
    (hlen,) = struct.unpack("<Q", data[8:16])
    header = json.loads(data[16:16 + hlen].decode())
    base = 16 + hlen
    out = {}
    for e in header["entries"]:
        if e["dtype"] != DTYPE:
            raise ArchiveError(f"{path}: unsupported dtype {e['dtype']!r} for {e['name']!r}")
        start = base + e["offset"]
        chunk = data[start:start + e["nbytes"]]
        if len(chunk) != e["nbytes"]:
            raise ArchiveError(f"{path}: truncated payload for {e['name']!r}")
        out[e["name"]] = np.frombuffer(chunk, dtype=DTYPE).reshape(e["shape"]).copy()
    return out, header.get("meta", {})
