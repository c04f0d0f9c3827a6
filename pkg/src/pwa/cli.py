"""Command-line orchestration of the descriptor pipeline.

Subcommands compose the library modules one stage at a time (fit-detectors,
aggregate, fit-whitening, postprocess, index, search, eval, ablate,
dump-weights); every run echoes its effective configuration to stderr and
into the produced artifacts. Exit codes: 0 success, 2 usage, 3 data format
or I/O, 4 numeric degeneracy.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import pipeline
from .aggregation import compute_weights, write_weight_map_pgm
from .config import PipelineConfig, build_config, read_config_file
from .detector_selection import load_detector_set, save_detector_set
from .errors import PwaError, UsageError
from .evaluation import (
    average_precision,
    format_report,
    mean_average_precision,
    parse_ground_truth,
)
from .postprocess import fit_whitening, load_whitening_model, save_whitening_model
from .retrieval import build_index, format_rankings, parse_rankings
from .tensor_store import read_descriptors, read_tensor, write_descriptors

IO_EXIT_CODE = 3


def _echo_config(config: PipelineConfig) -> None:
    for line in config.as_lines():
        print(line, file=sys.stderr)


def _write_sidecar(artifact_path, config: PipelineConfig) -> None:
    # Binary formats are fixed, so provenance rides in a text sidecar.
    Path(f"{artifact_path}.cfg").write_text("\n".join(config.as_lines()) + "\n")


def _write_text_artifact(path, text: str) -> None:
    Path(path).write_text(text)


def _required(value: str, flag: str) -> str:
    if not value:
        raise UsageError(f"missing required path: set --{flag.replace('_', '-')} "
                         f"or config key {flag!r}")
    return value


def cmd_fit_detectors(config: PipelineConfig) -> int:
    tensors = _required(config.tensors, "tensors")
    out = _required(config.detectors, "detectors")
    detectors = pipeline.fit_detectors(tensors, config.n_detectors)
    save_detector_set(out, detectors)
    _write_sidecar(out, config)
    print(f"selected {len(detectors)} of {detectors.source_channels} channels -> {out}",
          file=sys.stderr)
    return 0


def cmd_aggregate(config: PipelineConfig) -> int:
    tensors = _required(config.tensors, "tensors")
    detectors_path = _required(config.detectors, "detectors")
    out = _required(config.db_raw, "db-raw")
    detectors = load_detector_set(detectors_path)
    records = pipeline.aggregate_corpus(tensors, detectors, config.alpha, config.beta)
    write_descriptors(out, records)
    _write_sidecar(out, config)
    print(f"aggregated {len(records)} descriptors (dim {records[0].dim}) -> {out}",
          file=sys.stderr)
    return 0


def cmd_fit_whitening(config: PipelineConfig) -> int:
    raw_path = _required(config.db_raw, "db-raw")
    out = _required(config.whitening, "whitening")
    records = read_descriptors(raw_path)
    if not records:
        raise UsageError(f"{raw_path} holds no descriptors")
    m = pipeline.cap_target_dim(config.target_dim, records[0].dim, len(records))
    if m < config.target_dim:
        print(f"target_dim {config.target_dim} capped to {m} "
              f"({len(records)} descriptors of dim {records[0].dim})", file=sys.stderr)
    model = fit_whitening(records, m, epsilon=config.epsilon)
    if model.output_dim < m:
        print(f"retained {model.output_dim} of {m} directions "
              f"(near-null spread excluded)", file=sys.stderr)
    save_whitening_model(out, model)
    _write_sidecar(out, config)
    return 0


def cmd_postprocess(config: PipelineConfig) -> int:
    raw_path = _required(config.db_raw, "db-raw")
    model_path = _required(config.whitening, "whitening")
    out = _required(config.db_descriptors, "db-descriptors")
    model = load_whitening_model(model_path)
    records = pipeline.postprocess_records(
        read_descriptors(raw_path), model, final_l2=config.final_l2
    )
    write_descriptors(out, records)
    _write_sidecar(out, config)
    print(f"postprocessed {len(records)} descriptors to dim {model.output_dim} -> {out}",
          file=sys.stderr)
    return 0


def cmd_index(config: PipelineConfig) -> int:
    descriptors = _required(config.db_descriptors, "db-descriptors")
    index = build_index(read_descriptors(descriptors))
    print(f"index: entries={len(index)} dim={index.dim}")
    return 0


def cmd_search(config: PipelineConfig) -> int:
    db_path = _required(config.db_descriptors, "db-descriptors")
    query_path = _required(config.query_descriptors, "query-descriptors")
    out = _required(config.rankings, "rankings")
    index = build_index(read_descriptors(db_path))
    queries = read_descriptors(query_path)
    ranked = pipeline.search_all(index, queries, config.qe_k, config.qe_include_query)
    _write_text_artifact(out, format_rankings(ranked, header_lines=config.as_lines()))
    print(f"ranked {len(queries)} queries over {len(index)} images -> {out}",
          file=sys.stderr)
    return 0


def cmd_eval(config: PipelineConfig) -> int:
    rankings_path = _required(config.rankings, "rankings")
    gt_dir = _required(config.ground_truth, "ground-truth")
    out = _required(config.report, "report")
    rankings = parse_rankings(Path(rankings_path).read_text())
    entries = parse_ground_truth(gt_dir, query_prefix=config.query_prefix)
    mean_ap = mean_average_precision(rankings, entries, config.ap_variant)
    per_query = [
        (entry.query_id, average_precision(rankings[entry.query_id], entry, config.ap_variant))
        for entry in sorted(entries, key=lambda e: e.query_id)
    ]
    _write_text_artifact(
        out, format_report(per_query, mean_ap, header_lines=config.as_lines())
    )
    print(f"mAP {mean_ap:.6f}")
    return 0


def cmd_ablate(config: PipelineConfig, param: str, grid: list[int], out: str) -> int:
    tensors = _required(config.tensors, "tensors")
    queries = _required(config.queries, "queries")
    gt_dir = _required(config.ground_truth, "ground-truth")
    train = config.train_tensors or None
    rows = []
    for value in grid:
        kwargs = dict(
            n_detectors=config.n_detectors,
            target_dim=config.target_dim,
            alpha=config.alpha,
            beta=config.beta,
            epsilon=config.epsilon,
            qe_k=config.qe_k,
            qe_include_query=config.qe_include_query,
            final_l2=config.final_l2,
            ap_variant=config.ap_variant,
            train_corpus=train,
        )
        kwargs["n_detectors" if param == "n" else "target_dim"] = value
        result = pipeline.run_pipeline(
            tensors,
            queries,
            parse_ground_truth(gt_dir, query_prefix=config.query_prefix),
            **kwargs,
        )
        rows.append(f"{param}\t{value}\t{result.mean_ap:.6f}")
        print(rows[-1], file=sys.stderr)
    header = config.as_lines() + [f"ablation param={param} grid={','.join(map(str, grid))}"]
    _write_text_artifact(out, "\n".join([f"# {h}" for h in header] + rows) + "\n")
    return 0


def cmd_dump_weights(config: PipelineConfig, tensor_path: str) -> int:
    detectors_path = _required(config.detectors, "detectors")
    out_dir = _required(config.weights_dir, "weights-dir")
    tensor = read_tensor(tensor_path)
    detectors = load_detector_set(detectors_path)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    stem = Path(tensor_path).stem
    for channel in detectors.selected:
        weight_map = compute_weights(tensor, channel, config.alpha, config.beta)
        write_weight_map_pgm(
            out / f"{stem}_channel{channel:04d}.pgm",
            weight_map,
            comments=config.as_lines(),
        )
    print(f"wrote {len(detectors)} weight maps under {out}", file=sys.stderr)
    return 0


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="flat key=value config file")
    parser.add_argument("--alpha", type=float)
    parser.add_argument("--beta", type=float)
    parser.add_argument("--n-detectors", type=int, dest="n_detectors")
    parser.add_argument("--target-dim", type=int, dest="target_dim")
    parser.add_argument("--qe-k", type=int, dest="qe_k")
    parser.add_argument("--ap-variant", dest="ap_variant")
    parser.add_argument("--epsilon", type=float)
    parser.add_argument("--query-prefix", dest="query_prefix")


_PATH_FLAGS = {
    "tensors": "--tensors",
    "queries": "--queries",
    "train_tensors": "--train-tensors",
    "ground_truth": "--ground-truth",
    "detectors": "--detectors",
    "whitening": "--whitening",
    "db_raw": "--db-raw",
    "query_raw": "--query-raw",
    "db_descriptors": "--db-descriptors",
    "query_descriptors": "--query-descriptors",
    "rankings": "--rankings",
    "report": "--report",
    "weights_dir": "--weights-dir",
}


def _add_paths(parser: argparse.ArgumentParser, *keys: str) -> None:
    for key in keys:
        parser.add_argument(_PATH_FLAGS[key], dest=key)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pwa",
        description="Part-based weighting aggregation retrieval pipeline",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fit-detectors", help="fit channel stats and select detectors")
    _add_common(p)
    _add_paths(p, "tensors", "detectors")

    p = sub.add_parser("aggregate", help="aggregate tensors into raw descriptors")
    _add_common(p)
    _add_paths(p, "tensors", "detectors", "db_raw")

    p = sub.add_parser("fit-whitening", help="fit PCA-whitening on raw descriptors")
    _add_common(p)
    _add_paths(p, "db_raw", "whitening")

    p = sub.add_parser("postprocess", help="project raw descriptors through a model")
    _add_common(p)
    _add_paths(p, "db_raw", "whitening", "db_descriptors")

    p = sub.add_parser("index", help="validate a descriptor file as an index")
    _add_common(p)
    _add_paths(p, "db_descriptors")

    p = sub.add_parser("search", help="rank database descriptors for each query")
    _add_common(p)
    _add_paths(p, "db_descriptors", "query_descriptors", "rankings")

    p = sub.add_parser("eval", help="score rankings against ground truth")
    _add_common(p)
    _add_paths(p, "rankings", "ground_truth", "report")

    p = sub.add_parser("ablate", help="sweep n or target dim and report mAP per point")
    _add_common(p)
    _add_paths(p, "tensors", "queries", "train_tensors", "ground_truth")
    p.add_argument("--param", choices=("n", "m"), required=True)
    p.add_argument("--grid", required=True, help="comma-separated integer grid")
    p.add_argument("--out", required=True)

    p = sub.add_parser("dump-weights", help="export detector weight maps as PGM")
    _add_common(p)
    _add_paths(p, "detectors", "weights_dir")
    p.add_argument("--tensor", required=True, help="PWAT file to visualize")

    return parser


def _config_from_args(args: argparse.Namespace) -> PipelineConfig:
    file_values = read_config_file(args.config) if args.config else None
    overrides = {
        key: value
        for key, value in vars(args).items()
        if key not in ("command", "config", "param", "grid", "out", "tensor")
    }
    config = build_config(file_values, overrides)
    _echo_config(config)
    return config


def run(argv=None) -> int:
    args = build_parser().parse_args(argv)
    config = _config_from_args(args)
    if args.command == "fit-detectors":
        return cmd_fit_detectors(config)
    if args.command == "aggregate":
        return cmd_aggregate(config)
    if args.command == "fit-whitening":
        return cmd_fit_whitening(config)
    if args.command == "postprocess":
        return cmd_postprocess(config)
    if args.command == "index":
        return cmd_index(config)
    if args.command == "search":
        return cmd_search(config)
    if args.command == "eval":
        return cmd_eval(config)
    if args.command == "ablate":
        try:
            grid = [int(v) for v in args.grid.split(",") if v.strip()]
        except ValueError as exc:
            raise UsageError(f"bad --grid value: {exc}") from exc
        if not grid:
            raise UsageError("empty --grid")
        return cmd_ablate(config, args.param, grid, args.out)
    if args.command == "dump-weights":
        return cmd_dump_weights(config, args.tensor)
    raise UsageError(f"unknown command {args.command!r}")


def main(argv=None) -> int:
    try:
        return run(argv)
    except PwaError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return IO_EXIT_CODE


if __name__ == "__main__":
    sys.exit(main())
