"""Flat binary parameter container.

Layout (all integers little-endian u32, payload little-endian f32):

    magic "PDSW" | format version | entry count |
    per entry: name length | UTF-8 name | rank | extents... | payload

Round-trips are bit-exact.
"""

from __future__ import annotations

import struct
from pathlib import Path
from typing import Dict, Mapping, Union

import numpy as np

from .tensor import Tensor

MAGIC = b"PDSW"
FORMAT_VERSION = 1


class CheckpointError(RuntimeError):
    pass


def save_checkpoint(path, params: Mapping[str, Union[Tensor, np.ndarray]]) -> None:
    """Write named float32 arrays; iteration order of ``params`` is kept."""
    names = list(params)
    if len(set(names)) != len(names):
        raise CheckpointError("parameter names must be unique")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<II", FORMAT_VERSION, len(names)))
        for name in names:
            value = params[name]
            arr = value.data if isinstance(value, Tensor) else np.asarray(value)
            arr = np.ascontiguousarray(arr, dtype="<f4")
            encoded = name.encode("utf-8")
            fh.write(struct.pack("<I", len(encoded)))
            fh.write(encoded)
            fh.write(struct.pack("<I", arr.ndim))
            fh.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
            fh.write(arr.tobytes())


def load_checkpoint(path) -> Dict[str, np.ndarray]:
    """Read a parameter file back into name -> float32 array."""
    blob = Path(path).read_bytes()
    view = memoryview(blob)
    if view[:4] != MAGIC:
        raise CheckpointError(f"bad magic {bytes(view[:4])!r}, expected {MAGIC!r}")
    offset = 4

    def take(fmt):
        nonlocal offset
        size = struct.calcsize(fmt)
        if offset + size > len(view):
            raise CheckpointError("truncated checkpoint")
        values = struct.unpack_from(fmt, view, offset)
        offset += size
        return values

    version, count = take("<II")
    if version != FORMAT_VERSION:
        raise CheckpointError(f"unsupported format version {version}")
    params: Dict[str, np.ndarray] = {}
    for _ in range(count):
        (name_len,) = take("<I")
        if offset + name_len > len(view):
            raise CheckpointError("truncated checkpoint")
        name = bytes(view[offset:offset + name_len]).decode("utf-8")
        offset += name_len
        (rank,) = take("<I")
        shape = take(f"<{rank}I") if rank else ()
        n_values = int(np.prod(shape, dtype=np.int64))
        n_bytes = n_values * 4
        if offset + n_bytes > len(view):
            raise CheckpointError(f"truncated payload for {name!r}")
        arr = np.frombuffer(view, dtype="<f4", count=n_values,
                            offset=offset).reshape(shape)
        offset += n_bytes
        if name in params:
            raise CheckpointError(f"duplicate parameter name {name!r}")
        params[name] = arr.copy()
    if offset != len(view):
        raise CheckpointError("trailing bytes after last entry")
    return params
