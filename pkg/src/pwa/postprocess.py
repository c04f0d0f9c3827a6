"""Descriptor post-processing: l2 norm, PCA compression, whitening.

Training descriptors are l2-normalized, centered on their mean, and
decomposed; a new descriptor is normalized, centered with the training
mean, projected onto the leading principal directions, scaled to unit
per-component training variance, and (by default) re-normalized so dot
products are cosines.

Conventions fixed here: variance is population (divide by count); the
stored singular values are those of the centered matrix divided by
sqrt(count), so whitened training components have exactly unit population
variance. Projection rows are sign-canonicalized (largest-magnitude entry
positive) to make fitting order-independent and serialization
deterministic.

Whitening models serialize as PWAW files:

    b"PWAW" | version u32 | input_dim u32 | output_dim u32
    | input_dim f64 mean | output_dim*input_dim f64 projection (row-major)
    | output_dim f64 singular values
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DegeneracyError, InvalidValueError, TruncatedFileError, UsageError
from .tensor_store import FORMAT_VERSION, DescriptorRecord, _read_exact, _read_header

WHITENING_MAGIC = b"PWAW"

_U32 = struct.Struct("<I")
_FLOAT64 = np.dtype("<f8")

ORTHONORMAL_TOL = 1e-6


@dataclass(frozen=True, eq=False)
class WhiteningModel:
    """Fitted mean, projection matrix (rows = principal directions), sigmas."""

    mean: np.ndarray
    projection: np.ndarray
    singular_values: np.ndarray

    def __post_init__(self) -> None:
        mean = np.ascontiguousarray(self.mean, dtype=np.float64)
        proj = np.ascontiguousarray(self.projection, dtype=np.float64)
        sigma = np.ascontiguousarray(self.singular_values, dtype=np.float64)
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "projection", proj)
        object.__setattr__(self, "singular_values", sigma)

    @property
    def input_dim(self) -> int:
        return int(self.projection.shape[1])

    @property
    def output_dim(self) -> int:
        return int(self.projection.shape[0])

    def validate(self) -> None:
        if self.mean.ndim != 1 or self.projection.ndim != 2 or self.singular_values.ndim != 1:
            raise InvalidValueError("whitening model arrays have wrong rank")
        if self.mean.shape[0] != self.input_dim:
            raise InvalidValueError("whitening mean length != projection input dim")
        if self.singular_values.shape[0] != self.output_dim:
            raise InvalidValueError("singular value count != projection output dim")
        if (self.singular_values <= 0).any():
            raise InvalidValueError("singular values must be strictly positive")
        if (np.diff(self.singular_values) > 0).any():
            raise InvalidValueError("singular values must be non-increasing")
        gram = self.projection @ self.projection.T
        if np.abs(gram - np.eye(self.output_dim)).max() > ORTHONORMAL_TOL:
            raise InvalidValueError("projection rows are not orthonormal")


def _training_matrix(training) -> np.ndarray:
    rows = [np.asarray(getattr(item, "values", item), dtype=np.float64) for item in training]
    if len(rows) < 2:
        raise UsageError(f"whitening needs >= 2 training descriptors, got {len(rows)}")
    lengths = {row.shape for row in rows}
    if len(lengths) != 1 or rows[0].ndim != 1:
        raise UsageError("training descriptors must all be 1-D and share one length")
    return np.vstack(rows)


def fit_whitening(training, m: int, epsilon: float = 1e-10) -> WhiteningModel:
    """Fit PCA + whitening on l2-normalized training descriptors.

    Directions whose singular value is <= epsilon * (largest singular
    value) are excluded, so the returned model may have output_dim < m;
    callers that care should compare. Raises DegeneracyError when the
    normalized training set has zero spread (all identical).
    """
    x = _training_matrix(training)
    count, dim = x.shape
    feasible = min(dim, count - 1)
    if not 1 <= m <= feasible:
        raise UsageError(
            f"m={m} infeasible for {count} descriptors of length {dim} (max {feasible})"
        )
    norms = np.linalg.norm(x, axis=1)
    if (norms == 0).any():
        raise DegeneracyError("training set contains a zero descriptor")
    normalized = x / norms[:, None]
    mean = normalized.mean(axis=0)
    centered = normalized - mean
    _, s, vt = np.linalg.svd(centered, full_matrices=False)
    sigma = s / np.sqrt(count)
    if sigma[0] <= 0.0:
        raise DegeneracyError(
            "degenerate training set: zero spread (all descriptors identical "
            "after normalization)"
        )
    keep = int(np.count_nonzero(sigma > epsilon * sigma[0]))
    effective = min(m, keep)
    projection = vt[:effective].copy()
    # Canonical sign: largest-magnitude entry of each row is positive.
    for row in projection:
        pivot = int(np.argmax(np.abs(row)))
        if row[pivot] < 0:
            row *= -1.0
    model = WhiteningModel(mean, projection, sigma[:effective].copy())
    model.validate()
    return model


def apply_postprocess(
    raw, model: WhiteningModel, final_l2: bool = True
) -> DescriptorRecord:
    """Project one raw descriptor through the fitted model.

    l2-normalizes, centers with the training mean, projects, divides each
    component by its sigma, and by default re-normalizes so the output is
    a unit vector. Scale-invariant in the input.
    """
    values = np.asarray(raw.values, dtype=np.float64)
    if values.shape != (model.input_dim,):
        raise UsageError(
            f"descriptor length {values.shape} does not match model input dim "
            f"{model.input_dim}"
        )
    norm = float(np.linalg.norm(values))
    if norm == 0.0:
        raise DegeneracyError(f"zero raw descriptor {raw.image_id!r}")
    projected = model.projection @ (values / norm - model.mean)
    projected /= model.singular_values
    if final_l2:
        out_norm = float(np.linalg.norm(projected))
        if out_norm == 0.0:
            raise DegeneracyError(
                f"descriptor {raw.image_id!r} projects to the zero vector"
            )
        projected /= out_norm
    return DescriptorRecord(raw.image_id, projected.astype(np.float32))


def save_whitening_model(path, model: WhiteningModel) -> None:
    model.validate()
    with open(path, "wb") as fh:
        fh.write(WHITENING_MAGIC)
        fh.write(_U32.pack(FORMAT_VERSION))
        fh.write(_U32.pack(model.input_dim))
        fh.write(_U32.pack(model.output_dim))
        fh.write(model.mean.astype(_FLOAT64).tobytes())
        fh.write(np.ascontiguousarray(model.projection, dtype=_FLOAT64).tobytes())
        fh.write(model.singular_values.astype(_FLOAT64).tobytes())


def load_whitening_model(path) -> WhiteningModel:
    data = Path(path).read_bytes()
    (input_dim, output_dim), offset = _read_header(data, WHITENING_MAGIC, 2, path)
    item = _FLOAT64.itemsize

    raw_mean, offset = _read_exact(data, offset, input_dim * item, path, "mean")
    raw_proj, offset = _read_exact(
        data, offset, output_dim * input_dim * item, path, "projection"
    )
    raw_sigma, offset = _read_exact(data, offset, output_dim * item, path, "sigmas")
    if offset != len(data):
        raise TruncatedFileError(f"{path}: trailing bytes after whitening payload")
    model = WhiteningModel(
        mean=np.frombuffer(raw_mean, dtype=_FLOAT64).copy(),
        projection=np.frombuffer(raw_proj, dtype=_FLOAT64).reshape(output_dim, input_dim).copy(),
        singular_values=np.frombuffer(raw_sigma, dtype=_FLOAT64).copy(),
    )
    model.validate()
    return model
