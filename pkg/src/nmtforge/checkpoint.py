"""Named-tensor checkpoint container.

Binary layout: the magic string "NMTF1", a tensor count, then per tensor
the name byte length, UTF-8 name, rank, extents, and row-major float32
data.  All integers are unsigned 64-bit little-endian; floats are 32-bit
little-endian.
"""

from __future__ import annotations

import struct
from typing import Mapping

import numpy as np

from .autodiff import Tensor

MAGIC = b"NMTF1"
_U64 = struct.Struct("<Q")


def save_tensors(path, tensors: Mapping[str, "Tensor | np.ndarray"]) -> None:
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(_U64.pack(len(tensors)))
        for name, t in tensors.items():
            arr = t.data if isinstance(t, Tensor) else np.asarray(t)
            arr = np.ascontiguousarray(arr, dtype="<f4")
            name_bytes = name.encode("utf-8")
            f.write(_U64.pack(len(name_bytes)))
            f.write(name_bytes)
            f.write(_U64.pack(arr.ndim))
            for extent in arr.shape:
                f.write(_U64.pack(extent))
            f.write(arr.tobytes(order="C"))


def _read_exact(f, n: int) -> bytes:
    buf = f.read(n)
    if len(buf) != n:
        raise ValueError("checkpoint file truncated")
    return buf


def load_tensors(path, dtype=np.float64) -> dict[str, np.ndarray]:
    with open(path, "rb") as f:
        if _read_exact(f, len(MAGIC)) != MAGIC:
            raise ValueError(f"{path}: not a named-tensor checkpoint (bad magic)")
        (count,) = _U64.unpack(_read_exact(f, 8))
        out: dict[str, np.ndarray] = {}
        for _ in range(count):
            (name_len,) = _U64.unpack(_read_exact(f, 8))
            name = _read_exact(f, name_len).decode("utf-8")
            (rank,) = _U64.unpack(_read_exact(f, 8))
            shape = tuple(_U64.unpack(_read_exact(f, 8))[0] for _ in range(rank))
            n_items = int(np.prod(shape, dtype=np.int64)) if rank else 1
            raw = _read_exact(f, 4 * n_items)
            arr = np.frombuffer(raw, dtype="<f4").reshape(shape)
            out[name] = np.asarray(arr, dtype=dtype)
    return out
