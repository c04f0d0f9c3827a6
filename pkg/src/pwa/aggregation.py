"""Weighted aggregation of feature maps into raw global descriptors.

A selected channel's activation map is power-normalized into a per-position
weight map; weighted sum pooling under that map yields one C-dimensional
block per detector, and the blocks concatenate in detector order into the
raw descriptor. Aggregation is pure and stateless: different images may be
aggregated concurrently without shared state.

All reductions accumulate in float64; descriptors truncate to float32 only
at the storage boundary (``RawDescriptor.to_record``).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .detector_selection import DetectorSet
from .errors import InvalidValueError, UsageError
from .tensor_store import DescriptorRecord, FeatureMapTensor


@dataclass(frozen=True, eq=False)
class WeightMap:
    """Non-negative per-position weights derived from one channel."""

    weights: np.ndarray
    source_channel: int

    def __post_init__(self) -> None:
        arr = np.ascontiguousarray(self.weights, dtype=np.float64)
        object.__setattr__(self, "weights", arr)
        if arr.ndim != 2:
            raise InvalidValueError(f"weight map must be 2-D, got shape {arr.shape}")
        if not np.isfinite(arr).all() or (arr < 0).any():
            raise InvalidValueError("weights must be finite and >= 0")

    @property
    def height(self) -> int:
        return int(self.weights.shape[0])

    @property
    def width(self) -> int:
        return int(self.weights.shape[1])


@dataclass(frozen=True, eq=False)
class RawDescriptor:
    """Concatenated per-detector blocks; block n occupies [n*C, (n+1)*C)."""

    image_id: str
    detector_count: int
    channel_count: int
    values: np.ndarray

    def __post_init__(self) -> None:
        arr = np.ascontiguousarray(self.values, dtype=np.float64)
        object.__setattr__(self, "values", arr)
        expected = self.detector_count * self.channel_count
        if arr.shape != (expected,):
            raise InvalidValueError(
                f"raw descriptor must have length {expected}, got shape {arr.shape}"
            )
        if not np.isfinite(arr).all():
            raise InvalidValueError("raw descriptor contains NaN or Inf")

    def block(self, n: int) -> np.ndarray:
        """The n-th detector's C-dimensional block (a view)."""
        c = self.channel_count
        return self.values[n * c : (n + 1) * c]

    def to_record(self) -> DescriptorRecord:
        """Truncate to the float32 storage representation."""
        return DescriptorRecord(self.image_id, self.values.astype(np.float32))


def compute_weights(
    tensor: FeatureMapTensor, channel: int, alpha: float = 2.0, beta: float = 2.0
) -> WeightMap:
    """Power-normalize one channel's activations into a weight map.

    w(x, y) = (v(x, y) / (sum v^alpha)^(1/alpha))^(1/beta). A channel that
    is identically zero yields the all-zero map (the v -> 0 limit), keeping
    every weight finite. Scaling the channel by k > 0 leaves the map
    unchanged.
    """
    if not 0 <= channel < tensor.channels:
        raise UsageError(f"channel {channel} out of range [0, {tensor.channels})")
    if alpha <= 0 or beta <= 0:
        raise UsageError(f"alpha and beta must be > 0, got {alpha}, {beta}")
    v = tensor.values[channel].astype(np.float64)
    power_sum = float((v**alpha).sum())
    if power_sum == 0.0:
        return WeightMap(np.zeros_like(v), channel)
    weights = (v / power_sum ** (1.0 / alpha)) ** (1.0 / beta)
    return WeightMap(weights, channel)


def aggregate_region(tensor: FeatureMapTensor, weights: WeightMap) -> np.ndarray:
    """Weighted sum pooling over all channels: psi[c] = sum w(x,y) f(c,x,y)."""
    if (weights.height, weights.width) != (tensor.height, tensor.width):
        raise UsageError(
            f"weight map {weights.weights.shape} does not match tensor spatial dims "
            f"{(tensor.height, tensor.width)}"
        )
    return np.tensordot(
        tensor.values.astype(np.float64), weights.weights, axes=([1, 2], [0, 1])
    )


def aggregate_pwa(
    tensor: FeatureMapTensor,
    detectors: DetectorSet,
    alpha: float = 2.0,
    beta: float = 2.0,
    image_id: str = "",
) -> RawDescriptor:
    """Aggregate one image under each detector and concatenate the blocks."""
    if detectors.source_channels != tensor.channels:
        raise UsageError(
            f"detector set expects {detectors.source_channels} channels, "
            f"tensor has {tensor.channels}"
        )
    blocks = [
        aggregate_region(tensor, compute_weights(tensor, channel, alpha, beta))
        for channel in detectors.selected
    ]
    return RawDescriptor(
        image_id=image_id,
        detector_count=len(detectors),
        channel_count=tensor.channels,
        values=np.concatenate(blocks),
    )


def write_weight_map_pgm(path, weight_map: WeightMap, comments=()) -> None:
    """Export a weight map as plain 8-bit PGM (P2), min-max scaled.

    A constant map (including all-zero) renders as all black.
    """
    w = weight_map.weights
    lo, hi = float(w.min()), float(w.max())
    if hi > lo:
        pixels = np.rint((w - lo) / (hi - lo) * 255.0).astype(np.int64)
    else:
        pixels = np.zeros(w.shape, dtype=np.int64)
    lines = ["P2"]
    lines.extend(f"# {comment}" for comment in comments)
    lines.append(f"{weight_map.width} {weight_map.height}")
    lines.append("255")
    lines.extend(" ".join(str(p) for p in row) for row in pixels)
    with open(path, "w", encoding="ascii") as fh:
        fh.write("\n".join(lines) + "\n")
