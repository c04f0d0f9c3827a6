"""Image -> activation tensor extraction.

Pipeline per image: decode, optional crop (query boxes), halve when the
longer side exceeds the threshold, normalize, forward pass, write PWAT.
Inference is deterministic (eval mode, no grad, fixed preprocessing), so
re-extracting an image reproduces the file byte for byte.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch
from PIL import Image, UnidentifiedImageError

from .models import MIN_SIDE, build_backbone
from .pwat import write_pwat
from .spec import ExtractionSpec, ExtractorError

_IMAGENET_MEAN = torch.tensor([0.485, 0.456, 0.406]).view(3, 1, 1)
_IMAGENET_STD = torch.tensor([0.229, 0.224, 0.225]).view(3, 1, 1)

_RESAMPLE = {
    "nearest": Image.Resampling.NEAREST,
    "bilinear": Image.Resampling.BILINEAR,
    "bicubic": Image.Resampling.BICUBIC,
}


def load_image(path) -> Image.Image:
    try:
        with Image.open(path) as img:
            return img.convert("RGB")
    except (UnidentifiedImageError, OSError) as exc:
        raise ExtractorError(f"cannot decode image {path}: {exc}") from exc


def crop_image(image: Image.Image, crop_box) -> Image.Image:
    """Crop to an (x1, y1, x2, y2) box; float coords round to pixels."""
    left, top, right, bottom = (int(round(float(v))) for v in crop_box)
    if not (0 <= left < right <= image.width and 0 <= top < bottom <= image.height):
        raise ExtractorError(
            f"crop box {crop_box} out of bounds for {image.width}x{image.height} image"
        )
    return image.crop((left, top, right, bottom))


def apply_resize_rule(image: Image.Image, spec: ExtractionSpec) -> Image.Image:
    if max(image.size) <= spec.resize_threshold:
        return image
    new_size = (max(1, round(image.width / 2)), max(1, round(image.height / 2)))
    return image.resize(new_size, _RESAMPLE[spec.interpolation])


def prepare_image(image: Image.Image, spec: ExtractionSpec, crop_box=None) -> Image.Image:
    if crop_box is not None:
        image = crop_image(image, crop_box)
    image = apply_resize_rule(image, spec)
    if min(image.size) < MIN_SIDE:
        raise ExtractorError(
            f"image too small after preprocessing ({image.width}x{image.height}); "
            f"a side of at least {MIN_SIDE} px is required"
        )
    return image


def _to_input(image: Image.Image) -> torch.Tensor:
    arr = np.asarray(image, dtype=np.float32) / 255.0
    tensor = torch.from_numpy(arr).permute(2, 0, 1)
    return ((tensor - _IMAGENET_MEAN) / _IMAGENET_STD).unsqueeze(0)


class Extractor:
    """Reusable extractor: one backbone, many images."""

    def __init__(self, spec: ExtractionSpec):
        self.spec = spec
        self.backbone, self.channels = build_backbone(spec)

    def activations(self, image_path, crop_box=None) -> np.ndarray:
        image = prepare_image(load_image(image_path), self.spec, crop_box)
        with torch.no_grad():
            out = self.backbone(_to_input(image))
        activations = out.squeeze(0).numpy()
        if activations.shape[0] != self.channels:
            raise ExtractorError(
                f"backbone produced {activations.shape[0]} channels, "
                f"contract says {self.channels}"
            )
        if (activations < 0).any():
            raise ExtractorError("backbone produced negative activations")
        return activations

    def extract(self, image_path, out_path, crop_box=None) -> None:
        write_pwat(out_path, self.activations(image_path, crop_box))


@dataclass(frozen=True)
class ManifestLine:
    image_id: str
    path: str
    crop_box: tuple[float, float, float, float] | None


def parse_manifest(path) -> list[ManifestLine]:
    """Lines of "image_id path [x1 y1 x2 y2]", blank lines and '#' skipped."""
    lines = []
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        raw = raw.strip()
        if not raw or raw.startswith("#"):
            continue
        tokens = raw.split()
        if len(tokens) not in (2, 6):
            raise ExtractorError(
                f"{path}:{lineno}: expected 'image_id path [x1 y1 x2 y2]', "
                f"got {len(tokens)} tokens"
            )
        image_id = tokens[0]
        if "/" in image_id or "\\" in image_id:
            raise ExtractorError(f"{path}:{lineno}: image id may not contain path separators")
        box = None
        if len(tokens) == 6:
            try:
                box = tuple(float(t) for t in tokens[2:])
            except ValueError as exc:
                raise ExtractorError(f"{path}:{lineno}: non-numeric crop box") from exc
        lines.append(ManifestLine(image_id, tokens[1], box))
    return lines


def extract_batch(manifest_path, out_dir, spec: ExtractionSpec) -> tuple[int, list[str]]:
    """Extract every manifest line; failures are reported, not fatal.

    Returns (written_count, failure_messages) and writes a manifest echo
    (settings plus per-line status) next to the tensors.
    """
    lines = parse_manifest(manifest_path)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    extractor = Extractor(spec)
    written = 0
    failures: list[str] = []
    echo = [f"# {item}" for item in spec.describe()]
    for line in lines:
        box = "" if line.crop_box is None else " " + " ".join(f"{v:g}" for v in line.crop_box)
        try:
            extractor.extract(line.path, out_dir / f"{line.image_id}.pwat", line.crop_box)
        except (ExtractorError, OSError) as exc:
            failures.append(f"{line.image_id}: {exc}")
            echo.append(f"{line.image_id} {line.path}{box} FAILED {exc}")
        else:
            written += 1
            echo.append(f"{line.image_id} {line.path}{box} OK")
    (out_dir / "manifest.echo.txt").write_text("\n".join(echo) + "\n")
    return written, failures
