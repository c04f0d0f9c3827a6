"""End-to-end composition of the descriptor and retrieval pipeline.

The CLI subcommands and the ablation driver are thin wrappers over these
helpers, so a file-based run and an in-process run compute identical
numbers: descriptors pass through float32 exactly where the on-disk
formats would truncate them.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

from .aggregation import aggregate_pwa
from .detector_selection import ChannelStatsAccumulator, DetectorSet, select_detectors
from .errors import UsageError
from .evaluation import (
    GroundTruthEntry,
    average_precision,
    mean_average_precision,
    parse_ground_truth,
)
from .postprocess import WhiteningModel, apply_postprocess, fit_whitening
from .retrieval import (
    DescriptorIndex,
    RankedList,
    average_query_expansion,
    build_index,
    search,
)
from .tensor_store import DescriptorRecord, read_tensor

TENSOR_SUFFIX = ".pwat"


def tensor_paths(tensor_dir) -> list[tuple[str, Path]]:
    """(image_id, path) pairs for every tensor file in a directory, sorted by id."""
    tensor_dir = Path(tensor_dir)
    if not tensor_dir.is_dir():
        raise UsageError(f"tensor directory {tensor_dir} does not exist")
    pairs = sorted((p.stem, p) for p in tensor_dir.glob(f"*{TENSOR_SUFFIX}"))
    if not pairs:
        raise UsageError(f"no {TENSOR_SUFFIX} files under {tensor_dir}")
    return pairs


def iter_corpus(source):
    """Yield (image_id, FeatureMapTensor) from a directory or an in-memory list."""
    if isinstance(source, (str, Path)):
        for image_id, path in tensor_paths(source):
            yield image_id, read_tensor(path)
    else:
        for image_id, tensor in source:
            yield image_id, tensor


def fit_detectors(corpus, n: int) -> DetectorSet:
    """Fit channel statistics over a corpus and keep the top-n channels."""
    acc = ChannelStatsAccumulator()
    for _, tensor in iter_corpus(corpus):
        acc.update(tensor)
    return select_detectors(acc.finalize(), n)


def aggregate_corpus(
    corpus, detectors: DetectorSet, alpha: float, beta: float
) -> list[DescriptorRecord]:
    """Raw descriptor records (float32, storage-equivalent) for a whole corpus."""
    return [
        aggregate_pwa(tensor, detectors, alpha, beta, image_id=image_id).to_record()
        for image_id, tensor in iter_corpus(corpus)
    ]


def cap_target_dim(target_dim: int, input_dim: int, count: int) -> int:
    """Largest feasible output dim not exceeding the configured target."""
    return max(1, min(target_dim, input_dim, count - 1))


def postprocess_records(records, model: WhiteningModel, final_l2: bool = True):
    return [apply_postprocess(rec, model, final_l2=final_l2) for rec in records]


def search_all(
    index: DescriptorIndex,
    query_records,
    qe_k: int = 0,
    qe_include_query: bool = True,
) -> list[RankedList]:
    """Rank the index for each query, re-querying once when expansion is on."""
    results = []
    for record in query_records:
        if qe_k > 0:
            expanded = average_query_expansion(
                record, index, k=qe_k, include_query=qe_include_query
            )
            results.append(search(index, expanded))
        else:
            results.append(search(index, record))
    return results


@dataclass(frozen=True)
class PipelineResult:
    mean_ap: float
    per_query: tuple[tuple[str, float], ...]
    detectors: DetectorSet
    model: WhiteningModel


def run_pipeline(
    db_corpus,
    query_corpus,
    ground_truth,
    *,
    n_detectors: int,
    target_dim: int,
    alpha: float = 2.0,
    beta: float = 2.0,
    epsilon: float = 1e-10,
    qe_k: int = 0,
    qe_include_query: bool = True,
    final_l2: bool = True,
    ap_variant: str = "trapezoid",
    train_corpus=None,
    detectors: DetectorSet | None = None,
) -> PipelineResult:
    """Full pipeline: detectors -> descriptors -> whitening -> search -> mAP.

    Corpora are tensor directories or in-memory (image_id, tensor) lists;
    ground_truth is a directory or a list of GroundTruthEntry. The whitening
    corpus defaults to the database corpus. A pre-built DetectorSet may be
    supplied to bypass fitting (used by the selection-strategy comparison).
    """
    if isinstance(ground_truth, (str, Path)):
        entries = parse_ground_truth(ground_truth)
    else:
        entries = list(ground_truth)
    if detectors is None:
        detectors = fit_detectors(db_corpus, n_detectors)

    db_raw = aggregate_corpus(db_corpus, detectors, alpha, beta)
    if train_corpus is None:
        train_raw = db_raw
    else:
        train_raw = aggregate_corpus(train_corpus, detectors, alpha, beta)
    query_raw = aggregate_corpus(query_corpus, detectors, alpha, beta)

    m = cap_target_dim(target_dim, train_raw[0].dim, len(train_raw))
    model = fit_whitening(train_raw, m, epsilon=epsilon)

    index = build_index(postprocess_records(db_raw, model, final_l2=final_l2))
    query_records = postprocess_records(query_raw, model, final_l2=final_l2)

    rankings = {
        ranked.query_id: ranked
        for ranked in search_all(index, query_records, qe_k, qe_include_query)
    }
    per_query = tuple(
        (entry.query_id, average_precision(rankings[_require(rankings, entry)], entry, ap_variant))
        for entry in sorted(entries, key=lambda e: e.query_id)
    )
    mean_ap = mean_average_precision(rankings, entries, ap_variant)
    return PipelineResult(mean_ap=mean_ap, per_query=per_query, detectors=detectors, model=model)


def _require(rankings, entry: GroundTruthEntry) -> str:
    if entry.query_id not in rankings:
        raise UsageError(f"missing ranking for query {entry.query_id!r}")
    return entry.query_id
