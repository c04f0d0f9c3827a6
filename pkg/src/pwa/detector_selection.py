"""Unsupervised selection of discriminative channels ("part detectors").

Each database image is reduced to its per-channel spatial sums; channels
whose sums vary most across the database respond differently to different
objects, so the top-variance channels are kept as part detectors. Fitting
streams over the input and accumulates in double precision, so arbitrarily
large databases fit in constant memory; partial accumulators merge exactly.

Detector sets serialize as PWAS files:

    b"PWAS" | version u32 | C u32 | N u32 | N * (index u32, variance f64)
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import InvalidValueError, TruncatedFileError, UsageError
from .tensor_store import FORMAT_VERSION, FeatureMapTensor, _read_exact, _read_header

DETECTOR_MAGIC = b"PWAS"

_U32 = struct.Struct("<I")
_ENTRY = struct.Struct("<Id")


@dataclass(frozen=True, eq=False)
class ChannelStats:
    """Per-channel mean and population variance of spatially summed activations."""

    mean_vector: np.ndarray
    variance_vector: np.ndarray
    sample_count: int

    def __post_init__(self) -> None:
        mean = np.ascontiguousarray(self.mean_vector, dtype=np.float64)
        var = np.ascontiguousarray(self.variance_vector, dtype=np.float64)
        object.__setattr__(self, "mean_vector", mean)
        object.__setattr__(self, "variance_vector", var)
        if mean.shape != var.shape or mean.ndim != 1:
            raise InvalidValueError("channel stats vectors must be 1-D and equal length")
        if self.sample_count < 2:
            raise InvalidValueError("channel stats need at least 2 samples")
        if not np.isfinite(var).all() or (var < 0).any():
            raise InvalidValueError("channel variances must be finite and >= 0")

    @property
    def channel_count(self) -> int:
        return int(self.mean_vector.shape[0])


class ChannelStatsAccumulator:
    """Streaming accumulator for ChannelStats.

    Carries (count, sum, sum of squares) in float64; two accumulators merge
    exactly, so tensors may be consumed by parallel readers and combined.
    """

    def __init__(self) -> None:
        self.count = 0
        self._sum: np.ndarray | None = None
        self._sum_sq: np.ndarray | None = None

    def update(self, tensor: FeatureMapTensor) -> None:
        g = sum_pool(tensor)
        if self._sum is None:
            self._sum = np.zeros_like(g)
            self._sum_sq = np.zeros_like(g)
        elif g.shape != self._sum.shape:
            raise UsageError(
                f"inconsistent channel count: got {g.shape[0]}, "
                f"expected {self._sum.shape[0]}"
            )
        self._sum += g
        self._sum_sq += g * g
        self.count += 1

    def merge(self, other: "ChannelStatsAccumulator") -> None:
        if other._sum is None:
            return
        if self._sum is None:
            self._sum = other._sum.copy()
            self._sum_sq = other._sum_sq.copy()
            self.count = other.count
            return
        if self._sum.shape != other._sum.shape:
            raise UsageError("cannot merge accumulators with different channel counts")
        self._sum += other._sum
        self._sum_sq += other._sum_sq
        self.count += other.count

    def finalize(self) -> ChannelStats:
        if self.count < 2:
            raise UsageError(f"channel statistics need >= 2 tensors, got {self.count}")
        mean = self._sum / self.count
        # Population variance; tiny negatives from cancellation clamp to 0.
        variance = np.maximum(self._sum_sq / self.count - mean * mean, 0.0)
        return ChannelStats(mean, variance, self.count)


@dataclass(frozen=True, eq=False)
class DetectorSet:
    """Channel indices selected as part detectors, ordered by descending variance."""

    selected: tuple[int, ...]
    variances: np.ndarray
    source_channels: int

    def __post_init__(self) -> None:
        object.__setattr__(self, "selected", tuple(int(i) for i in self.selected))
        var = np.ascontiguousarray(self.variances, dtype=np.float64)
        object.__setattr__(self, "variances", var)
        n = len(self.selected)
        if not 1 <= n <= self.source_channels:
            raise InvalidValueError(
                f"detector count {n} out of range for {self.source_channels} channels"
            )
        if len(set(self.selected)) != n:
            raise InvalidValueError("detector indices must be unique")
        if min(self.selected) < 0 or max(self.selected) >= self.source_channels:
            raise InvalidValueError("detector index out of channel range")
        if var.shape != (n,):
            raise InvalidValueError("variance list must match detector count")
        if (np.diff(var) > 0).any():
            raise InvalidValueError("detector variances must be non-increasing")

    def __len__(self) -> int:
        return len(self.selected)


def sum_pool(tensor: FeatureMapTensor) -> np.ndarray:
    """Spatial sum per channel, accumulated in float64."""
    return tensor.values.sum(axis=(1, 2), dtype=np.float64)


def fit_channel_stats(tensors) -> ChannelStats:
    """Fit per-channel mean/variance of sum-pooled activations over a stream."""
    acc = ChannelStatsAccumulator()
    for tensor in tensors:
        acc.update(tensor)
    return acc.finalize()


def select_detectors(stats: ChannelStats, n: int) -> DetectorSet:
    """Keep the n channels with largest variance; ties break to the lower index."""
    c = stats.channel_count
    if not 1 <= n <= c:
        raise UsageError(f"detector count {n} out of range [1, {c}]")
    order = np.lexsort((np.arange(c), -stats.variance_vector))[:n]
    return DetectorSet(
        selected=tuple(int(i) for i in order),
        variances=stats.variance_vector[order],
        source_channels=c,
    )


def save_detector_set(path, detectors: DetectorSet) -> None:
    with open(path, "wb") as fh:
        fh.write(DETECTOR_MAGIC)
        fh.write(_U32.pack(FORMAT_VERSION))
        fh.write(_U32.pack(detectors.source_channels))
        fh.write(_U32.pack(len(detectors)))
        for index, variance in zip(detectors.selected, detectors.variances):
            fh.write(_ENTRY.pack(index, variance))


def load_detector_set(path) -> DetectorSet:
    data = Path(path).read_bytes()
    (channels, n), offset = _read_header(data, DETECTOR_MAGIC, 2, path)
    selected = []
    variances = []
    for i in range(n):
        raw, offset = _read_exact(data, offset, _ENTRY.size, path, f"detector {i}")
        index, variance = _ENTRY.unpack(raw)
        selected.append(index)
        variances.append(variance)
    if offset != len(data):
        raise TruncatedFileError(f"{path}: trailing bytes after {n} detectors")
    return DetectorSet(tuple(selected), np.array(variances), channels)
