"""Binary field snapshots with a JSON sidecar.

Layout: 8-byte magic, then little-endian ``uint32`` version, grid size
``n`` and component count, a ``float64`` time, then the samples as
little-endian ``float64`` in ``(component, x1, x2)`` order.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path
from typing import Optional

import numpy as np

MAGIC = b"JETFLOW\x00"
VERSION = 1
_HEADER = struct.Struct("<IIId")
HEADER_BYTES = len(MAGIC) + _HEADER.size


def write_snapshot(path, values: np.ndarray, time: float, *, name: str = "field",
                   meta: Optional[dict] = None) -> Path:
    """Write ``values`` (``(n, n)`` or ``(c, n, n)``) and the sidecar ``<path>.json``."""
    path = Path(path)
    arr = np.asarray(values, dtype="<f8")
    if arr.ndim == 2:
        arr = arr[None]
    if arr.ndim != 3 or arr.shape[1] != arr.shape[2]:
        raise ValueError(f"expected (c, n, n) samples, got shape {arr.shape}")
    c, n, _ = arr.shape
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(_HEADER.pack(VERSION, n, c, float(time)))
        fh.write(np.ascontiguousarray(arr).tobytes())
    side = {
        "format": "jetflow-snapshot",
        "version": VERSION,
        "name": name,
        "n": n,
        "components": c,
        "time": float(time),
        "dtype": "<f8",
        "layout": ["component", "x1", "x2"],
        "header_bytes": HEADER_BYTES,
        "meta": meta or {},
    }
    Path(str(path) + ".json").write_text(json.dumps(side, indent=2, sort_keys=True))
    return path


def read_snapshot(path) -> tuple[np.ndarray, dict]:
    """Return ``(values, header)``; ``values`` has shape ``(c, n, n)``.

    Raises:
        ValueError: bad magic, unknown version or truncated data.
    """
    raw = Path(path).read_bytes()
    if raw[: len(MAGIC)] != MAGIC:
        raise ValueError(f"{path}: not a snapshot file")
    version, n, c, time = _HEADER.unpack_from(raw, len(MAGIC))
    if version != VERSION:
        raise ValueError(f"{path}: unsupported snapshot version {version}")
    body = raw[HEADER_BYTES:]
    if len(body) != 8 * c * n * n:
        raise ValueError(f"{path}: expected {8 * c * n * n} data bytes, found {len(body)}")
    values = np.frombuffer(body, dtype="<f8").reshape(c, n, n).astype(float)
    return values, {"version": version, "n": n, "components": c, "time": time}
