"""Binary stores for feature-map tensors and descriptor lists.

Defines the two little-endian on-disk formats shared with the feature
extractor: ``PWAT`` holds one image's C x H x W activation tensor,
``PWAD`` holds a list of equal-length float32 descriptors keyed by image
id. Both formats are endianness-fixed and round-trip bit-exactly.

File layouts (all integers u32 little-endian, all floats IEEE-754 LE):

    PWAT:  b"PWAT" | version | C | H | W | C*H*W float32
    PWAD:  b"PWAD" | version | count | dim | count * record
           record: id_length | id bytes (UTF-8) | dim float32
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import (
    BadMagicError,
    InvalidValueError,
    TruncatedFileError,
    VersionError,
)

TENSOR_MAGIC = b"PWAT"
DESCRIPTOR_MAGIC = b"PWAD"
FORMAT_VERSION = 1

# Tolerance on the l2 norm below which a stored descriptor counts as unit.
UNIT_NORM_TOL = 1e-4

_U32 = struct.Struct("<I")
_FLOAT32 = np.dtype("<f4")


@dataclass(frozen=True, eq=False)
class FeatureMapTensor:
    """One image's post-ReLU convolutional activations, channel-major.

    ``values`` has shape (channels, height, width) and float32 dtype; every
    entry must be finite and non-negative.
    """

    values: np.ndarray

    def __post_init__(self) -> None:
        arr = np.ascontiguousarray(self.values, dtype=_FLOAT32)
        if arr.ndim != 3:
            raise InvalidValueError(
                f"tensor values must have shape (C, H, W), got shape {arr.shape}"
            )
        object.__setattr__(self, "values", arr)

    @property
    def channels(self) -> int:
        return int(self.values.shape[0])

    @property
    def height(self) -> int:
        return int(self.values.shape[1])

    @property
    def width(self) -> int:
        return int(self.values.shape[2])

    def validate(self) -> None:
        """Raise InvalidValueError unless every tensor invariant holds."""
        if min(self.values.shape) < 1:
            raise InvalidValueError(
                f"tensor dims must all be >= 1, got shape {self.values.shape}"
            )
        if not np.isfinite(self.values).all():
            raise InvalidValueError("tensor contains NaN or Inf activations")
        if (self.values < 0).any():
            raise InvalidValueError("tensor contains negative activations")


@dataclass(frozen=True, eq=False)
class DescriptorRecord:
    """A named float32 descriptor vector."""

    image_id: str
    values: np.ndarray

    def __post_init__(self) -> None:
        arr = np.ascontiguousarray(self.values, dtype=_FLOAT32)
        if arr.ndim != 1:
            raise InvalidValueError(
                f"descriptor values must be 1-D, got shape {arr.shape}"
            )
        object.__setattr__(self, "values", arr)

    @property
    def dim(self) -> int:
        return int(self.values.shape[0])

    @property
    def is_normalized(self) -> bool:
        """True when the l2 norm is 1 within UNIT_NORM_TOL."""
        norm = float(np.linalg.norm(self.values.astype(np.float64)))
        return abs(norm - 1.0) <= UNIT_NORM_TOL


def _read_exact(data: bytes, offset: int, size: int, path, what: str) -> tuple[bytes, int]:
    end = offset + size
    if end > len(data):
        raise TruncatedFileError(f"{path}: truncated while reading {what}")
    return data[offset:end], end


def _read_u32(data: bytes, offset: int, path, what: str) -> tuple[int, int]:
    raw, offset = _read_exact(data, offset, _U32.size, path, what)
    return _U32.unpack(raw)[0], offset


def _read_header(data: bytes, magic: bytes, n_fields: int, path) -> tuple[list[int], int]:
    raw, offset = _read_exact(data, 0, len(magic), path, "magic")
    if raw != magic:
        raise BadMagicError(f"{path}: bad magic {raw!r}, expected {magic!r}")
    version, offset = _read_u32(data, offset, path, "version")
    if version != FORMAT_VERSION:
        raise VersionError(f"{path}: unsupported version {version}")
    fields = []
    for _ in range(n_fields):
        value, offset = _read_u32(data, offset, path, "header field")
        fields.append(value)
    return fields, offset


def write_tensor(path, tensor: FeatureMapTensor) -> None:
    """Write a validated tensor as a PWAT file (refuses invalid tensors)."""
    tensor.validate()
    with open(path, "wb") as fh:
        fh.write(TENSOR_MAGIC)
        fh.write(_U32.pack(FORMAT_VERSION))
        for dim in tensor.values.shape:
            fh.write(_U32.pack(dim))
        fh.write(tensor.values.tobytes())


def read_tensor(path) -> FeatureMapTensor:
    """Read and validate a PWAT file."""
    data = Path(path).read_bytes()
    (c, h, w), offset = _read_header(data, TENSOR_MAGIC, 3, path)
    if min(c, h, w) < 1:
        raise InvalidValueError(f"{path}: tensor dims must all be >= 1, got {(c, h, w)}")
    expected = c * h * w * _FLOAT32.itemsize
    payload = data[offset:]
    if len(payload) != expected:
        raise TruncatedFileError(
            f"{path}: expected {expected} payload bytes for dims {(c, h, w)}, "
            f"found {len(payload)}"
        )
    values = np.frombuffer(payload, dtype=_FLOAT32).reshape(c, h, w).copy()
    tensor = FeatureMapTensor(values)
    tensor.validate()
    return tensor


def write_descriptors(path, records) -> None:
    """Write descriptor records as a PWAD file; all records must share one dim."""
    records = list(records)
    dim = records[0].dim if records else 0
    for rec in records:
        if rec.dim != dim:
            raise InvalidValueError(
                f"mixed descriptor dims: {rec.image_id!r} has {rec.dim}, expected {dim}"
            )
        if not np.isfinite(rec.values).all():
            raise InvalidValueError(f"descriptor {rec.image_id!r} contains NaN or Inf")
    with open(path, "wb") as fh:
        fh.write(DESCRIPTOR_MAGIC)
        fh.write(_U32.pack(FORMAT_VERSION))
        fh.write(_U32.pack(len(records)))
        fh.write(_U32.pack(dim))
        for rec in records:
            ident = rec.image_id.encode("utf-8")
            fh.write(_U32.pack(len(ident)))
            fh.write(ident)
            fh.write(rec.values.tobytes())


def read_descriptors(path) -> list[DescriptorRecord]:
    """Read a PWAD file back into records, inverting write_descriptors exactly."""
    data = Path(path).read_bytes()
    (count, dim), offset = _read_header(data, DESCRIPTOR_MAGIC, 2, path)
    records = []
    for i in range(count):
        id_len, offset = _read_u32(data, offset, path, f"record {i} id length")
        raw_id, offset = _read_exact(data, offset, id_len, path, f"record {i} id")
        raw_values, offset = _read_exact(
            data, offset, dim * _FLOAT32.itemsize, path, f"record {i} values"
        )
        values = np.frombuffer(raw_values, dtype=_FLOAT32).copy()
        if not np.isfinite(values).all():
            raise InvalidValueError(f"{path}: record {i} contains NaN or Inf")
        records.append(DescriptorRecord(raw_id.decode("utf-8"), values))
    if offset != len(data):
        raise TruncatedFileError(
            f"{path}: {len(data) - offset} trailing bytes after {count} records"
        )
    return records
