"""Command-line interface: one subcommand per pipeline stage.

Exit codes: 0 success, 1 usage error, 2 validation or format error,
3 numeric failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .binarizer import assemble_vector, binarize_layer
from .clustering import confusion_and_align, evaluate, kmeans
from .errors import NumericError, ValidationError
from .formats import (
    load_layer_dumps,
    load_scores,
    read_embedding_csv,
    read_matrix,
    read_partition_csv,
    read_vector,
    save_scores,
    write_embedding_csv,
    write_embedding_spectrum,
    write_matrix,
    write_matrix_csv,
    write_partition_csv,
    write_vector,
)
from .importance import DampingPolicy, accumulate_hessian, score_layer
from .mds import DEFAULT_EPSILON, torgerson
from .metricspace import aggregate, coverage, distance_matrix, drop_unobserved, impute
from .pipeline import PipelineConfig, RunSpec, layout_safe_tree, run_pipeline
from .synth import SyntheticSpec, synth_generate
from .treelayout import export_layout, kamada_kawai, minimum_spanning_tree, render_svg

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_VALIDATION = 2
EXIT_NUMERIC = 3


class _Parser(argparse.ArgumentParser):
    """argparse exits with 2 on usage errors; the contract here is 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _damping_from_args(args) -> DampingPolicy:
    if args.damping_lambda is not None:
        return DampingPolicy.absolute(args.damping_lambda)
    return DampingPolicy.relative(args.rho)


def _cmd_score(args) -> int:
    layers = load_layer_dumps(args.layers)
    damping = _damping_from_args(args)
    scores = []
    for layer_id, (weights, calibration) in sorted(layers.items()):
        hessian = accumulate_hessian([calibration], damping)
        from .importance import LayerWeights

        scores.append(score_layer(LayerWeights(weights, layer_id=layer_id), hessian))
    save_scores(args.output, scores)
    print(f"scored {len(scores)} layers -> {args.output}")
    return EXIT_OK


def _cmd_binarize(args) -> int:
    scores = load_scores(args.scores)
    blocks = [binarize_layer(s) for s in scores]
    vector = assemble_vector(
        blocks,
        language_tag=args.language,
        model_tag=args.model,
        corpus_tag=args.corpus,
    )
    write_vector(args.output, vector)
    print(f"{args.language}: {vector.n_bits} bits over {len(blocks)} layers -> {args.output}")
    return EXIT_OK


def _cmd_distmat(args) -> int:
    vectors = [read_vector(p) for p in args.vectors]
    vectors.sort(key=lambda v: v.language_tag)
    matrix = distance_matrix(vectors)
    write_matrix(args.output, matrix)
    if args.csv:
        write_matrix_csv(args.csv, matrix)
    print(f"{matrix.n} languages -> {args.output}")
    return EXIT_OK


def _cmd_aggregate(args) -> int:
    matrices = [read_matrix(p) for p in args.matrices]
    universe = sorted({label for m in matrices for label in m.labels})
    combined = aggregate(matrices, universe)
    report = coverage(combined)
    if args.coverage_report:
        Path(args.coverage_report).write_text(
            json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n"
        )
    if not report.complete:
        if args.missing_pairs == "error":
            combined.require_fully_observed("aggregation output")
        elif args.missing_pairs == "drop":
            combined = drop_unobserved(combined)
        else:
            combined = impute(combined, float(args.missing_pairs))
    write_matrix(args.output, combined)
    if args.csv:
        write_matrix_csv(args.csv, combined)
    print(
        f"aggregated {len(matrices)} matrices over {combined.n} languages -> {args.output}"
    )
    return EXIT_OK


def _cmd_embed(args) -> int:
    matrix = read_matrix(args.matrix)
    embedding = torgerson(matrix, epsilon=args.epsilon)
    write_embedding_csv(args.output, embedding)
    spectrum = args.spectrum or str(Path(args.output).with_suffix(".spectrum.json"))
    write_embedding_spectrum(spectrum, embedding)
    print(f"embedded {embedding.n} languages into {embedding.dim} dimensions")
    return EXIT_OK


def _cmd_cluster(args) -> int:
    embedding = read_embedding_csv(args.embedding)
    partition = kmeans(embedding, args.k, seed=args.seed, restarts=args.restarts)
    write_partition_csv(args.output, partition)
    print(f"k={args.k} clusters over {embedding.n} languages -> {args.output}")
    return EXIT_OK


def _cmd_evaluate(args) -> int:
    embedding = read_embedding_csv(args.embedding)
    reference = read_partition_csv(args.reference)
    distances = read_matrix(args.distances) if args.distances else None
    report = evaluate(
        embedding,
        reference,
        seed=args.seed,
        restarts=args.restarts,
        distances=distances,
    )
    Path(args.output).write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")
    if args.confusion:
        predicted = kmeans(
            embedding, reference.k, seed=args.seed, restarts=args.restarts
        )
        from .clustering import LabeledPartition

        restricted = LabeledPartition(
            {t: reference.assignment[t] for t in embedding.labels},
            reference.label_names,
        )
        confusion, perm = confusion_and_align(predicted, restricted)
        import csv as _csv

        with open(args.confusion, "w", newline="") as handle:
            writer = _csv.writer(handle)
            writer.writerow(["cluster", *confusion.col_names])
            for row in perm:
                writer.writerow(
                    [confusion.row_names[row], *confusion.counts[row].tolist()]
                )
    print(json.dumps(report, sort_keys=True))
    return EXIT_OK


def _cmd_mst(args) -> int:
    matrix = read_matrix(args.matrix)
    tree = minimum_spanning_tree(matrix)
    document = {
        "nodes": list(tree.nodes),
        "edges": [
            {"source": tree.nodes[i], "target": tree.nodes[j], "weight": w}
            for i, j, w in tree.edges
        ],
        "total_weight": tree.total_weight,
    }
    Path(args.output).write_text(json.dumps(document, indent=2, sort_keys=True) + "\n")
    print(f"MST over {tree.n} languages, total weight {tree.total_weight}")
    return EXIT_OK


def _cmd_layout(args) -> int:
    matrix = read_matrix(args.matrix)
    tree = minimum_spanning_tree(matrix)
    safe = layout_safe_tree(tree)
    layout = kamada_kawai(
        safe,
        targets=args.targets,
        metric=matrix if args.targets == "metric" else None,
        max_iter=args.max_iter,
        tol=args.tol,
    )
    groups = read_partition_csv(args.groups) if args.groups else None
    document = export_layout(tree, layout, node_labels=groups)
    Path(args.output).write_text(json.dumps(document, indent=2, sort_keys=True) + "\n")
    if args.svg:
        Path(args.svg).write_text(render_svg(tree, layout, node_labels=groups) + "\n")
    print(f"layout stress {layout.stress:.6g} after {layout.iterations} iterations")
    return EXIT_OK


def _cmd_synth(args) -> int:
    spec = SyntheticSpec(
        families=args.families,
        members_per_family=args.members,
        n_bits=args.bits,
        p_proto=args.p_proto,
        p_member=args.p_member,
        seed=args.seed,
    )
    out = Path(args.output)
    out.mkdir(parents=True, exist_ok=True)
    runs = []
    truth = None
    for run_index in range(args.runs):
        model_tag = f"synthmodel{run_index}"
        corpus_tag = "synthcorpus"
        vectors, truth = synth_generate(
            spec, model_tag=model_tag, corpus_tag=corpus_tag, run=run_index
        )
        run_dir = out / f"run{run_index:02d}"
        run_dir.mkdir(exist_ok=True)
        for vector in vectors:
            write_vector(run_dir / f"{vector.language_tag}.lgv", vector)
        runs.append(
            {
                "model": model_tag,
                "corpus": corpus_tag,
                "vectors": [f"run{run_index:02d}/*.lgv"],
            }
        )
    write_partition_csv(out / "truth.csv", truth)
    config = {
        "runs": runs,
        "references": {"truth": "truth.csv"},
        "seed": args.seed,
        "output_dir": "pipeline-out",
    }
    (out / "pipeline.json").write_text(json.dumps(config, indent=2, sort_keys=True) + "\n")
    print(
        f"{args.runs} runs x {spec.n_languages} languages x {spec.n_bits} bits -> {out}"
    )
    return EXIT_OK


def _cmd_pipeline(args) -> int:
    if args.config:
        config = PipelineConfig.from_json(args.config)
        overrides = {}
        if args.output:
            overrides["output_dir"] = args.output
        if args.seed is not None:
            overrides["seed"] = args.seed
        if args.epsilon is not None:
            overrides["epsilon"] = args.epsilon
        if args.threads is not None:
            overrides["threads"] = args.threads
        if overrides:
            from dataclasses import replace

            config = replace(config, **overrides)
    else:
        if not args.run:
            raise ValidationError("pipeline needs --config or at least one --run")
        runs = []
        for spec in args.run:
            parts = spec.split(":", 2)
            if len(parts) != 3:
                raise ValidationError(
                    f"--run expects MODEL:CORPUS:GLOB, got {spec!r}"
                )
            runs.append(RunSpec(parts[0], parts[1], (parts[2],)))
        config = PipelineConfig(
            runs=tuple(runs),
            output_dir=args.output or "langgeo-out",
            epsilon=args.epsilon if args.epsilon is not None else DEFAULT_EPSILON,
            seed=args.seed if args.seed is not None else 0,
            restarts=args.restarts,
            references=tuple(
                (Path(p).stem, p) for p in (args.reference or [])
            ),
            missing_pairs=args.missing_pairs,
            threads=args.threads,
        )
    result = run_pipeline(config)
    print(
        f"pipeline complete: {result.manifest['vector_count']} vectors, "
        f"{result.embedding.n} languages embedded into {result.embedding.dim} dimensions "
        f"-> {result.output_dir}"
    )
    return EXIT_OK


def _add_missing_pairs_flag(parser) -> None:
    parser.add_argument(
        "--missing-pairs",
        default="error",
        help='policy for pairs observed in no run: "error", "drop", or a number to impute',
    )


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="langgeo", description=__doc__)
    parser.add_argument("--version", action="version", version=f"langgeo {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("score", help="importance scores from layer dumps")
    p.add_argument("layers", help=".npz with W_<id> and X_<id> arrays")
    p.add_argument("--output", required=True, help="output .npz of S_<id> arrays")
    p.add_argument("--rho", type=float, default=0.01, help="relative damping factor")
    p.add_argument(
        "--damping-lambda",
        type=float,
        default=None,
        help="absolute damping added to the Hessian diagonal (overrides --rho)",
    )
    p.set_defaults(func=_cmd_score)

    p = sub.add_parser("binarize", help="median-threshold scores into a .lgv vector")
    p.add_argument("scores", help=".npz of S_<id> arrays")
    p.add_argument("--language", required=True)
    p.add_argument("--model", default="")
    p.add_argument("--corpus", default="")
    p.add_argument("--output", required=True, help="output .lgv path")
    p.set_defaults(func=_cmd_binarize)

    p = sub.add_parser("distmat", help="pairwise Hamming distances for one run")
    p.add_argument("vectors", nargs="+", help=".lgv files")
    p.add_argument("--output", required=True, help="output .lgd path")
    p.add_argument("--csv", default=None, help="also write a CSV mirror")
    p.set_defaults(func=_cmd_distmat)

    p = sub.add_parser("aggregate", help="average matrices over observed entries")
    p.add_argument("matrices", nargs="+", help=".lgd files")
    p.add_argument("--output", required=True, help="output .lgd path")
    p.add_argument("--csv", default=None, help="also write a CSV mirror")
    p.add_argument("--coverage-report", default=None, help="write coverage JSON here")
    _add_missing_pairs_flag(p)
    p.set_defaults(func=_cmd_aggregate)

    p = sub.add_parser("embed", help="classical MDS embedding of a distance matrix")
    p.add_argument("matrix", help=".lgd file (fully observed)")
    p.add_argument("--output", required=True, help="output embedding CSV")
    p.add_argument("--epsilon", type=float, default=DEFAULT_EPSILON)
    p.add_argument("--spectrum", default=None, help="sidecar JSON path")
    p.set_defaults(func=_cmd_embed)

    p = sub.add_parser("cluster", help="k-means partition of an embedding")
    p.add_argument("embedding", help="embedding CSV")
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--restarts", type=int, default=10)
    p.add_argument("--output", required=True, help="output partition CSV")
    p.set_defaults(func=_cmd_cluster)

    p = sub.add_parser("evaluate", help="clustering metrics against a reference")
    p.add_argument("embedding", help="embedding CSV")
    p.add_argument("--reference", required=True, help="reference partition CSV")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--restarts", type=int, default=10)
    p.add_argument("--distances", default=None, help="optional .lgd for silhouette")
    p.add_argument("--confusion", default=None, help="write aligned confusion CSV")
    p.add_argument("--output", required=True, help="output metrics JSON")
    p.set_defaults(func=_cmd_evaluate)

    p = sub.add_parser("mst", help="minimum spanning tree of a distance matrix")
    p.add_argument("matrix", help=".lgd file (fully observed)")
    p.add_argument("--output", required=True, help="output tree JSON")
    p.set_defaults(func=_cmd_mst)

    p = sub.add_parser("layout", help="MST plus stress-minimizing 2-D layout")
    p.add_argument("matrix", help=".lgd file (fully observed)")
    p.add_argument("--output", required=True, help="output layout JSON")
    p.add_argument("--svg", default=None, help="also render an SVG here")
    p.add_argument("--targets", choices=["tree-path", "metric"], default="tree-path")
    p.add_argument("--max-iter", type=int, default=None)
    p.add_argument("--tol", type=float, default=1e-6)
    p.add_argument("--groups", default=None, help="partition CSV for node colors")
    p.set_defaults(func=_cmd_layout)

    p = sub.add_parser("synth", help="planted-family synthetic vectors")
    p.add_argument("--families", type=int, default=4)
    p.add_argument("--members", type=int, default=8)
    p.add_argument("--bits", type=int, default=65536)
    p.add_argument("--p-proto", type=float, default=0.25)
    p.add_argument("--p-member", type=float, default=0.02)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--runs", type=int, default=3)
    p.add_argument("--output", required=True, help="output directory")
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("pipeline", help="run every stage end to end")
    p.add_argument("--config", default=None, help="pipeline config JSON")
    p.add_argument(
        "--run",
        action="append",
        default=None,
        metavar="MODEL:CORPUS:GLOB",
        help="inline run spec (repeatable; alternative to --config)",
    )
    p.add_argument("--reference", action="append", default=None, help="partition CSV")
    p.add_argument("--output", default=None, help="output directory")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--restarts", type=int, default=10)
    p.add_argument("--epsilon", type=float, default=None)
    p.add_argument("--threads", type=int, default=None)
    _add_missing_pairs_flag(p)
    p.set_defaults(func=_cmd_pipeline)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse --help exits 0, usage errors exit 1
        return int(exc.code or 0)
    try:
        return args.func(args)
    except ValidationError as exc:  # includes FormatError and CoverageError
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except OSError as exc:  # unreadable or unwritable inputs/outputs
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


def entrypoint() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()
