"""Part-based weighting aggregation of convolutional features for retrieval.

Discriminative channels are selected by the variance of their spatially
summed activations over a database; each selected channel's normalized
activation map weights a sum-pooling pass over all channels; the resulting
blocks concatenate into a global descriptor that is PCA-whitened and
compressed. A retrieval harness (exhaustive cosine search, average query
expansion) and an Oxford-style mean-average-precision evaluator close the
loop.
"""

from .aggregation import (
    RawDescriptor,
    WeightMap,
    aggregate_pwa,
    aggregate_region,
    compute_weights,
    write_weight_map_pgm,
)
from .detector_selection import (
    ChannelStats,
    ChannelStatsAccumulator,
    DetectorSet,
    fit_channel_stats,
    load_detector_set,
    save_detector_set,
    select_detectors,
    sum_pool,
)
from .errors import (
    BadMagicError,
    DataFormatError,
    DegeneracyError,
    InvalidValueError,
    PwaError,
    TruncatedFileError,
    UsageError,
    VersionError,
)
from .evaluation import (
    GroundTruthEntry,
    average_precision,
    format_report,
    mean_average_precision,
    parse_ground_truth,
)
from .postprocess import (
    WhiteningModel,
    apply_postprocess,
    fit_whitening,
    load_whitening_model,
    save_whitening_model,
)
from .retrieval import (
    DescriptorIndex,
    RankedList,
    average_query_expansion,
    build_index,
    format_rankings,
    parse_rankings,
    search,
)
from .tensor_store import (
    DescriptorRecord,
    FeatureMapTensor,
    read_descriptors,
    read_tensor,
    write_descriptors,
    write_tensor,
)

__all__ = [
    "BadMagicError",
    "ChannelStats",
    "ChannelStatsAccumulator",
    "DataFormatError",
    "DegeneracyError",
    "DescriptorIndex",
    "DescriptorRecord",
    "DetectorSet",
    "FeatureMapTensor",
    "GroundTruthEntry",
    "InvalidValueError",
    "PwaError",
    "RankedList",
    "RawDescriptor",
    "TruncatedFileError",
    "UsageError",
    "VersionError",
    "WeightMap",
    "WhiteningModel",
    "aggregate_pwa",
    "aggregate_region",
    "apply_postprocess",
    "average_precision",
    "average_query_expansion",
    "build_index",
    "compute_weights",
    "fit_channel_stats",
    "fit_whitening",
    "format_rankings",
    "format_report",
    "load_detector_set",
    "load_whitening_model",
    "mean_average_precision",
    "parse_ground_truth",
    "parse_rankings",
    "read_descriptors",
    "read_tensor",
    "save_detector_set",
    "save_whitening_model",
    "search",
    "select_detectors",
    "sum_pool",
    "write_descriptors",
    "write_tensor",
    "write_weight_map_pgm",
]
