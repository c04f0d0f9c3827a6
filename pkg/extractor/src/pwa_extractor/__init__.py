"""CNN activation-tensor extraction feeding the retrieval pipeline.

Decodes images, applies the query-crop and large-image halving rules,
runs a deterministic forward pass through a pretrained (or seeded-random)
backbone, and writes the activations as PWAT files the retrieval engine
consumes.
"""

from .extract import Extractor, extract_batch, parse_manifest
from .models import CHANNEL_CONTRACTS, build_backbone
from .pwat import TensorWriteError, write_pwat
from .spec import ExtractionSpec, ExtractorError

__all__ = [
    "CHANNEL_CONTRACTS",
    "ExtractionSpec",
    "Extractor",
    "ExtractorError",
    "TensorWriteError",
    "build_backbone",
    "extract_batch",
    "parse_manifest",
    "write_pwat",
]
