"""Command line for single-image and batch extraction."""

from __future__ import annotations

import argparse
import sys

from .extract import Extractor, extract_batch
from .spec import RESIZE_METHODS, ExtractionSpec, ExtractorError


def _add_spec_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--model", default="vgg16-pool5",
                        choices=("vgg16-pool5", "resnet101-res5c_relu"))
    parser.add_argument("--weights", default="random",
                        help="'random', 'pretrained', or a local state-dict path")
    parser.add_argument("--seed", type=int, default=0,
                        help="init seed for --weights random")
    parser.add_argument("--resize-threshold", type=int, default=1024,
                        help="halve images whose longer side exceeds this")
    parser.add_argument("--interpolation", default="bilinear", choices=RESIZE_METHODS)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pwa-extract",
        description="Extract CNN activation tensors (PWAT files) from images",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    single = sub.add_parser("single", help="extract one image")
    _add_spec_flags(single)
    single.add_argument("--image", required=True)
    single.add_argument("--out", required=True, help="output .pwat path")
    single.add_argument("--crop", nargs=4, type=float, metavar=("X1", "Y1", "X2", "Y2"),
                        help="crop box applied before the resize rule (query protocol)")

    batch = sub.add_parser("batch", help="extract a manifest of images")
    _add_spec_flags(batch)
    batch.add_argument("--manifest", required=True,
                       help="text lines: image_id path [x1 y1 x2 y2]")
    batch.add_argument("--out-dir", required=True)

    return parser


def _spec_from(args: argparse.Namespace) -> ExtractionSpec:
    return ExtractionSpec(
        model=args.model,
        weights=args.weights,
        seed=args.seed,
        resize_threshold=args.resize_threshold,
        interpolation=args.interpolation,
    )


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        spec = _spec_from(args)
        if args.command == "single":
            crop = tuple(args.crop) if args.crop else None
            Extractor(spec).extract(args.image, args.out, crop)
            return 0
        written, failures = extract_batch(args.manifest, args.out_dir, spec)
        for failure in failures:
            print(f"failed: {failure}", file=sys.stderr)
        print(f"wrote {written} tensors, {len(failures)} failures", file=sys.stderr)
        return 1 if failures else 0
    except ExtractorError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
