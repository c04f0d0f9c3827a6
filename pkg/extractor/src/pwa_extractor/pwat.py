"""PWAT tensor file writer.

Deliberately self-contained: the extractor talks to the retrieval engine
only through this byte format, so the layout is duplicated here rather
than imported.

    b"PWAT" | version u32=1 | C u32 | H u32 | W u32 | C*H*W float32 LE
"""

from __future__ import annotations

import os
import struct
from pathlib import Path

import numpy as np

MAGIC = b"PWAT"
VERSION = 1

_U32 = struct.Struct("<I")


class TensorWriteError(Exception):
    """The activation array violates the format's invariants."""


def write_pwat(path, activations: np.ndarray) -> None:
    """Atomically write one image's (C, H, W) activations.

    The array must be non-negative and finite; it is stored float32
    little-endian, channel-major. Writes go through a temp file plus
    rename so concurrent readers never observe a partial file.
    """
    arr = np.ascontiguousarray(activations, dtype="<f4")
    if arr.ndim != 3 or min(arr.shape) < 1:
        raise TensorWriteError(f"activations must be (C, H, W) with dims >= 1, got {arr.shape}")
    if not np.isfinite(arr).all():
        raise TensorWriteError("activations contain NaN or Inf")
    if (arr < 0).any():
        raise TensorWriteError("activations contain negative values")
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(MAGIC)
        fh.write(_U32.pack(VERSION))
        for dim in arr.shape:
            fh.write(_U32.pack(dim))
        fh.write(arr.tobytes())
    os.replace(tmp, path)
