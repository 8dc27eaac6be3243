"""Writer for the downstream binary tensor container.

Layout (all little-endian): 8-byte magic "OBOITNSR", u32 version (1),
u32 rank, rank x u64 dims, then the float32 payload in row-major order.
Rank must be 1 (logit vectors) or 3 (feature maps). This is kept as a
standalone writer on purpose: the bridge talks to the downstream tooling
only through its on-disk formats and CLI.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

MAGIC = b"OBOITNSR"
VERSION = 1


def tensor_bytes(values) -> bytes:
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim not in (1, 3):
        raise ValueError(f"rank must be 1 or 3, got {arr.ndim}")
    if arr.size == 0 or any(d < 1 for d in arr.shape):
        raise ValueError("all dims must be >= 1")
    with np.errstate(over="ignore"):
        cast = arr.astype("<f4")
    if not np.all(np.isfinite(cast)):
        raise ValueError("values must be finite in float32")
    payload = cast.tobytes(order="C")
    header = MAGIC + struct.pack("<II", VERSION, arr.ndim)
    header += struct.pack(f"<{arr.ndim}Q", *arr.shape)
    return header + payload


def write_tensor(path, values) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(tensor_bytes(values))
