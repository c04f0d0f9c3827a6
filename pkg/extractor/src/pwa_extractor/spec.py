"""Extraction settings shared by the API and the CLI."""

from __future__ import annotations

from dataclasses import dataclass

RESIZE_METHODS = ("nearest", "bilinear", "bicubic")


class ExtractorError(Exception):
    """Anything that prevents producing a valid activation tensor."""


@dataclass(frozen=True)
class ExtractionSpec:
    """What to run and how to preprocess.

    Images whose longer side exceeds resize_threshold are halved before the
    forward pass; queries are cropped to their annotated box first. weights
    is "random" (seeded init, reproducible without downloads), "pretrained"
    (torchvision hub), or a local state-dict path.
    """

    model: str = "vgg16-pool5"
    weights: str = "random"
    seed: int = 0
    resize_threshold: int = 1024
    interpolation: str = "bilinear"

    def __post_init__(self) -> None:
        if self.resize_threshold < 1:
            raise ExtractorError("resize_threshold must be >= 1")
        if self.interpolation not in RESIZE_METHODS:
            raise ExtractorError(
                f"interpolation must be one of {RESIZE_METHODS}, got {self.interpolation!r}"
            )

    def describe(self) -> list[str]:
        return [
            f"model={self.model}",
            f"weights={self.weights}",
            f"seed={self.seed}",
            f"resize_threshold={self.resize_threshold}",
            f"interpolation={self.interpolation}",
        ]
