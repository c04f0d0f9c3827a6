"""Synthetic corpora with planted structure for retrieval-level tests.

The planted corpus hides class identity where only spatially-aware
weighting can see it: a signature channel carries class-specific values on
a handful of regions whose total activation is identical across classes,
so near-uniform weight maps (noise channels) transmit nothing, while the
planted detector channels mask exactly those regions. The planted
channels' spatial sums vary strongly across images, so variance-based
selection finds them.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from pwa.evaluation import GroundTruthEntry
from pwa.tensor_store import DescriptorRecord, FeatureMapTensor


@dataclass(frozen=True)
class PlantedCorpus:
    items: tuple[tuple[str, FeatureMapTensor], ...]
    labels: dict[str, int]
    planted_channels: tuple[int, ...]
    signature_channel: int
    channels: int

    def ids_of_class(self, label: int) -> list[str]:
        return [image_id for image_id, _ in self.items if self.labels[image_id] == label]


def make_planted_corpus(
    rng: np.random.Generator,
    *,
    classes: int = 4,
    per_class: int = 8,
    channels: int = 32,
    planted: int = 3,
    height: int = 4,
    width: int = 4,
    region_size: int = 4,
    signature_values: tuple[float, ...] = (1.0, 4.0, 16.0),
    signature_jitter: float = 0.02,
    amp_range: tuple[float, float] = (1.0, 4.0),
    amp_per_class: bool = False,
    noise_constant: float | None = None,
    noise_scale: float = 1.0,
    twin_delta: float | None = None,
    class_mix: float = 0.0,
) -> PlantedCorpus:
    """twin_delta, when set, makes the last two classes near-twins: same
    signature pattern, amplitude tables differing by twin_delta in one
    channel only, so the twin separation is the smallest-variance
    descriptor direction (the first one compression drops).

    class_mix > 0 blends each image's signature pattern with a random other
    class's pattern, adding within-class spread that stays inside the
    between-class subspace (no spurious whitened noise directions)."""
    if len(signature_values) != planted:
        raise ValueError("one signature value per planted region required")
    all_perms = list(itertools.permutations(signature_values))
    distinct = classes - 1 if twin_delta is not None else classes
    if distinct > len(all_perms):
        raise ValueError(f"at most {len(all_perms)} distinct patterns for {planted} regions")
    if (planted + 1) * region_size > height * width:
        raise ValueError("regions do not fit in the spatial grid")

    perm_rows = rng.choice(len(all_perms), size=distinct, replace=False)
    class_patterns = [all_perms[i] for i in perm_rows]
    if twin_delta is not None:
        class_patterns.append(class_patterns[-1])

    cells = rng.permutation(height * width)
    regions = [cells[j * region_size : (j + 1) * region_size] for j in range(planted)]

    roles = rng.choice(channels, size=planted + 1, replace=False)
    planted_channels = tuple(int(c) for c in roles[:planted])
    signature_channel = int(roles[planted])

    if twin_delta is not None:
        amp_per_class = True
    if amp_per_class:
        amp_table = rng.uniform(amp_range[0], amp_range[1], size=(classes, planted))
        if twin_delta is not None:
            amp_table[-1] = amp_table[-2]
            amp_table[-1, 0] += twin_delta

    labels_flat = np.repeat(np.arange(classes), per_class)
    rng.shuffle(labels_flat)

    items = []
    labels = {}
    for i, label in enumerate(labels_flat):
        label = int(label)
        values = np.zeros((channels, height, width), dtype=np.float64)
        for channel in range(channels):
            if channel in planted_channels or channel == signature_channel:
                continue
            if noise_constant is not None:
                values[channel] = noise_constant
            else:
                values[channel] = rng.uniform(0.0, noise_scale, size=(height, width))
        flat = values.reshape(channels, -1)
        for j, channel in enumerate(planted_channels):
            if amp_per_class:
                amp = amp_table[label, j]
            else:
                amp = rng.uniform(*amp_range)
            flat[channel, regions[j]] = amp
        if class_mix > 0 and classes > 1:
            other = int(rng.choice([c for c in range(classes) if c != label]))
        for j in range(planted):
            value = class_patterns[label][j]
            if class_mix > 0 and classes > 1:
                value = (1.0 - class_mix) * value + class_mix * class_patterns[other][j]
            if signature_jitter > 0:
                value = value * (1.0 + signature_jitter * rng.uniform(-1.0, 1.0))
            flat[signature_channel, regions[j]] = value
        image_id = f"img{i:03d}"
        items.append((image_id, FeatureMapTensor(values.astype(np.float32))))
        labels[image_id] = label

    return PlantedCorpus(
        items=tuple(items),
        labels=labels,
        planted_channels=planted_channels,
        signature_channel=signature_channel,
        channels=channels,
    )


def corpus_queries(
    corpus: PlantedCorpus, rng: np.random.Generator, per_class: int = 2
) -> list[tuple[str, FeatureMapTensor]]:
    """Pick query images (members of the corpus) per class."""
    by_id = dict(corpus.items)
    chosen = []
    for label in sorted(set(corpus.labels.values())):
        ids = corpus.ids_of_class(label)
        picks = rng.choice(len(ids), size=min(per_class, len(ids)), replace=False)
        chosen.extend(ids[p] for p in sorted(picks))
    return [(image_id, by_id[image_id]) for image_id in chosen]


def corpus_ground_truth(corpus: PlantedCorpus, queries) -> list[GroundTruthEntry]:
    """Same-class images are good; the query's own entry is excluded by AP."""
    entries = []
    for query_id, _ in queries:
        label = corpus.labels[query_id]
        entries.append(
            GroundTruthEntry(
                query_id=query_id,
                query_image_id=query_id,
                crop_box=(0.0, 0.0, 1.0, 1.0),
                good=frozenset(corpus.ids_of_class(label)),
                ok=frozenset(),
                junk=frozenset(),
            )
        )
    return entries


def make_two_clusters(
    rng: np.random.Generator,
    *,
    dim: int = 16,
    per_cluster: int = 25,
    cluster_cos: float = 0.1,
    noise: float = 0.35,
    n_queries: int = 4,
):
    """Two clusters of unit vectors plus queries from the first cluster.

    Returns (index_records, query_records, ground_truth_entries).
    """

    def unit(v: np.ndarray) -> np.ndarray:
        return v / np.linalg.norm(v)

    center_a = unit(rng.normal(size=dim))
    ortho = rng.normal(size=dim)
    ortho = unit(ortho - (ortho @ center_a) * center_a)
    center_b = cluster_cos * center_a + np.sqrt(1.0 - cluster_cos**2) * ortho

    records = []
    for label, center in (("a", center_a), ("b", center_b)):
        for i in range(per_cluster):
            vector = unit(center + noise * rng.normal(size=dim))
            records.append(DescriptorRecord(f"{label}{i:03d}", vector.astype(np.float32)))

    queries = []
    entries = []
    good = frozenset(f"a{i:03d}" for i in range(per_cluster))
    for q in range(n_queries):
        vector = unit(center_a + noise * rng.normal(size=dim))
        query_id = f"query{q:02d}"
        queries.append(DescriptorRecord(query_id, vector.astype(np.float32)))
        entries.append(
            GroundTruthEntry(
                query_id=query_id,
                query_image_id=query_id,
                crop_box=(0.0, 0.0, 1.0, 1.0),
                good=good,
                ok=frozenset(),
                junk=frozenset(),
            )
        )
    return records, queries, entries
