"""Oxford/Paris-style ground truth and mean average precision.

Ground truth lives in a directory of per-query text files: `<q>_query.txt`
holds "name x1 y1 x2 y2" (the crop box applies at feature-extraction time;
rankings here are over opaque tensor ids), and `<q>_good.txt`, `<q>_ok.txt`,
`<q>_junk.txt` list one image name per line. Positives are good + ok; junk
images are removed from a ranking before AP; the query's own database entry,
when present, is excluded from both the ranking and the relevance sets so a
perfect ranking still scores 1.

Two AP variants are supported: "trapezoid" (the benchmark's original
interpolated formulation) and "rectangle" (PASCAL-style sum of precision at
each positive).
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DataFormatError, DegeneracyError, UsageError
from .retrieval import RankedList

AP_VARIANTS = ("trapezoid", "rectangle")


@dataclass(frozen=True, eq=False)
class GroundTruthEntry:
    """One query: its image, crop box, and good/ok/junk relevance lists."""

    query_id: str
    query_image_id: str
    crop_box: tuple[float, float, float, float]
    good: frozenset[str]
    ok: frozenset[str]
    junk: frozenset[str]

    def __post_init__(self) -> None:
        object.__setattr__(self, "good", frozenset(self.good))
        object.__setattr__(self, "ok", frozenset(self.ok))
        object.__setattr__(self, "junk", frozenset(self.junk))
        object.__setattr__(self, "crop_box", tuple(float(v) for v in self.crop_box))
        x1, y1, x2, y2 = self.crop_box
        if not (x1 < x2 and y1 < y2):
            raise DataFormatError(
                f"query {self.query_id!r}: malformed crop box {self.crop_box}"
            )
        overlap = (self.good & self.ok) | (self.good & self.junk) | (self.ok & self.junk)
        if overlap:
            raise DataFormatError(
                f"query {self.query_id!r}: ids in multiple relevance lists: "
                f"{sorted(overlap)[:5]}"
            )

    @property
    def positives(self) -> frozenset[str]:
        return self.good | self.ok


def _read_id_list(path: Path) -> list[str]:
    if not path.is_file():
        raise DataFormatError(f"missing ground-truth file {path}")
    return [line.strip() for line in path.read_text().splitlines() if line.strip()]


def parse_ground_truth(gt_dir, query_prefix: str = "") -> list[GroundTruthEntry]:
    """Parse a directory of Oxford-style ground-truth files, sorted by query id.

    query_prefix, when given, is stripped from the image name in each
    `*_query.txt` (the Oxford5k files prefix query names with "oxc1_").
    """
    gt_dir = Path(gt_dir)
    query_files = sorted(gt_dir.glob("*_query.txt"))
    if not query_files:
        raise DataFormatError(f"no *_query.txt files under {gt_dir}")
    entries = []
    for query_file in query_files:
        query_id = query_file.name[: -len("_query.txt")]
        tokens = query_file.read_text().split()
        if len(tokens) != 5:
            raise DataFormatError(
                f"{query_file}: expected 'name x1 y1 x2 y2', got {len(tokens)} tokens"
            )
        name = tokens[0]
        if query_prefix and name.startswith(query_prefix):
            name = name[len(query_prefix):]
        try:
            box = tuple(float(t) for t in tokens[1:])
        except ValueError as exc:
            raise DataFormatError(f"{query_file}: non-numeric crop box") from exc
        entries.append(
            GroundTruthEntry(
                query_id=query_id,
                query_image_id=name,
                crop_box=box,
                good=frozenset(_read_id_list(gt_dir / f"{query_id}_good.txt")),
                ok=frozenset(_read_id_list(gt_dir / f"{query_id}_ok.txt")),
                junk=frozenset(_read_id_list(gt_dir / f"{query_id}_junk.txt")),
            )
        )
    return entries


def average_precision(
    ranked: RankedList, entry: GroundTruthEntry, variant: str = "trapezoid"
) -> float:
    """Average precision of one ranking under the benchmark protocol."""
    if variant not in AP_VARIANTS:
        raise UsageError(f"unknown AP variant {variant!r}, expected one of {AP_VARIANTS}")
    own = entry.query_image_id
    positives = entry.positives - {own}
    junk = entry.junk - {own}
    if not positives:
        raise DegeneracyError(f"query {entry.query_id!r} has no positive images")
    n_pos = len(positives)
    ap = 0.0
    old_recall = 0.0
    old_precision = 1.0
    found = 0
    rank = 0
    for image_id in ranked.image_ids():
        if image_id == own or image_id in junk:
            continue
        rank += 1
        if image_id in positives:
            found += 1
            recall = found / n_pos
            precision = found / rank
            if variant == "trapezoid":
                ap += (recall - old_recall) * (old_precision + precision) / 2.0
            else:
                ap += (recall - old_recall) * precision
            old_recall = recall
        old_precision = found / rank
    return ap


def mean_average_precision(rankings, entries, variant: str = "trapezoid") -> float:
    """Unweighted mean AP over all ground-truth entries.

    rankings maps query_id -> RankedList and must cover every entry.
    Queries are averaged in sorted-id order, so the result is independent
    of input ordering.
    """
    entries = list(entries)
    if not entries:
        raise UsageError("no ground-truth entries to evaluate")
    aps = []
    for entry in sorted(entries, key=lambda e: e.query_id):
        if entry.query_id not in rankings:
            raise UsageError(f"missing ranking for query {entry.query_id!r}")
        aps.append(average_precision(rankings[entry.query_id], entry, variant))
    return float(np.mean(aps))


def format_report(per_query, mean_ap: float, header_lines=()) -> str:
    """Per-query AP table plus the machine-readable final "mAP <float6>" line."""
    lines = [f"# {line}" for line in header_lines]
    lines.extend(f"{query_id}\t{ap:.6f}" for query_id, ap in per_query)
    lines.append(f"mAP {mean_ap:.6f}")
    return "\n".join(lines) + "\n"
