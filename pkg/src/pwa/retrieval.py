"""Exhaustive cosine ranking over a descriptor index, plus query expansion.

The index is an immutable list of unit descriptors; search is an exact
full scan (dot products are cosines), so rankings are reproducible and
independent of any internal batching. Ranked results serialize as
tab-separated text lines "query_id image_id rank score".
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DataFormatError, DegeneracyError, InvalidValueError, UsageError
from .tensor_store import DescriptorRecord


@dataclass(frozen=True, eq=False)
class DescriptorIndex:
    """Immutable database side of retrieval: ids plus a row-per-image matrix."""

    ids: tuple[str, ...]
    matrix: np.ndarray

    def __len__(self) -> int:
        return len(self.ids)

    @property
    def dim(self) -> int:
        return int(self.matrix.shape[1])

    def position(self, image_id: str) -> int:
        try:
            return self._positions[image_id]
        except AttributeError:
            object.__setattr__(
                self, "_positions", {img: i for i, img in enumerate(self.ids)}
            )
            return self._positions[image_id]


@dataclass(frozen=True, eq=False)
class RankedList:
    """Hits ordered by non-increasing score; ties broke to ascending image id."""

    query_id: str
    hits: tuple[tuple[str, float], ...]

    def __post_init__(self) -> None:
        object.__setattr__(
            self, "hits", tuple((str(i), float(s)) for i, s in self.hits)
        )
        scores = [s for _, s in self.hits]
        if any(b > a for a, b in zip(scores, scores[1:])):
            raise InvalidValueError(f"ranked scores for {self.query_id!r} increase")

    def image_ids(self) -> list[str]:
        return [image_id for image_id, _ in self.hits]


def build_index(records) -> DescriptorIndex:
    """Index unit-norm descriptor records, preserving insertion order."""
    records = list(records)
    if not records:
        return DescriptorIndex(ids=(), matrix=np.zeros((0, 0), dtype=np.float64))
    dim = records[0].dim
    seen = set()
    for rec in records:
        if rec.dim != dim:
            raise InvalidValueError(
                f"descriptor {rec.image_id!r} has dim {rec.dim}, index expects {dim}"
            )
        if not rec.is_normalized:
            raise InvalidValueError(f"descriptor {rec.image_id!r} is not unit-norm")
        if rec.image_id in seen:
            raise InvalidValueError(f"duplicate image id {rec.image_id!r}")
        seen.add(rec.image_id)
    matrix = np.vstack([rec.values.astype(np.float64) for rec in records])
    return DescriptorIndex(ids=tuple(rec.image_id for rec in records), matrix=matrix)


def _query_vector(query) -> tuple[str, np.ndarray]:
    if isinstance(query, DescriptorRecord):
        return query.image_id, query.values.astype(np.float64)
    return "", np.asarray(query, dtype=np.float64)


def search(index: DescriptorIndex, query, k: int | None = None) -> RankedList:
    """Exhaustively rank the index against one unit query descriptor.

    k limits the returned hits (clamped to the index size); None returns all.
    """
    query_id, vector = _query_vector(query)
    if len(index) == 0:
        return RankedList(query_id=query_id, hits=())
    if vector.shape != (index.dim,):
        raise UsageError(
            f"query dim {vector.shape} does not match index dim {index.dim}"
        )
    if k is not None and k < 1:
        raise UsageError(f"k must be >= 1 or None, got {k}")
    scores = np.clip(index.matrix @ vector, -1.0, 1.0)
    order = np.lexsort((np.asarray(index.ids), -scores))
    if k is not None:
        order = order[:k]
    hits = tuple((index.ids[i], float(scores[i])) for i in order)
    return RankedList(query_id=query_id, hits=hits)


def average_query_expansion(
    query, index: DescriptorIndex, k: int = 10, include_query: bool = True
) -> DescriptorRecord:
    """Expand a query as the normalized mean of itself and its top-k hits.

    The caller re-runs search with the returned descriptor. k larger than
    the index is clamped to use every entry.
    """
    if len(index) == 0:
        raise UsageError("query expansion needs a non-empty index")
    query_id, vector = _query_vector(query)
    ranked = search(index, query, k=min(k, len(index)))
    rows = [index.matrix[index.position(image_id)] for image_id in ranked.image_ids()]
    if include_query:
        rows.append(vector)
    mean = np.mean(rows, axis=0)
    norm = float(np.linalg.norm(mean))
    if norm == 0.0:
        raise DegeneracyError(
            f"expanded query {query_id!r} cancelled to the zero vector"
        )
    return DescriptorRecord(query_id, (mean / norm).astype(np.float32))


def format_rankings(ranked_lists, header_lines=()) -> str:
    """Render ranked lists as tab-separated text with '#' header comments."""
    lines = [f"# {line}" for line in header_lines]
    for ranked in ranked_lists:
        for rank, (image_id, score) in enumerate(ranked.hits, start=1):
            lines.append(f"{ranked.query_id}\t{image_id}\t{rank}\t{score:.6f}")
    return "\n".join(lines) + "\n"


def parse_rankings(text: str) -> dict[str, RankedList]:
    """Parse format_rankings output back into per-query ranked lists."""
    per_query: dict[str, list[tuple[str, float]]] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        fields = line.split("\t")
        if len(fields) != 4:
            raise DataFormatError(f"rankings line {lineno}: expected 4 fields")
        query_id, image_id, rank_str, score_str = fields
        hits = per_query.setdefault(query_id, [])
        try:
            rank = int(rank_str)
            score = float(score_str)
        except ValueError as exc:
            raise DataFormatError(f"rankings line {lineno}: {exc}") from exc
        if rank != len(hits) + 1:
            raise DataFormatError(
                f"rankings line {lineno}: rank {rank} out of sequence for {query_id!r}"
            )
        hits.append((image_id, score))
    return {
        query_id: RankedList(query_id=query_id, hits=tuple(hits))
        for query_id, hits in per_query.items()
    }
