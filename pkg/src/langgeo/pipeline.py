"""End-to-end orchestration: vectors -> distances -> aggregate -> embedding
-> clustering metrics -> spanning-tree layout, plus a reproducibility manifest.

Independent (model, corpus) runs are processed in parallel and joined before
aggregation. Outputs are byte-identical across repeated invocations on the
same inputs; the manifest isolates wall-clock time in its single `created_at`
field.
"""

from __future__ import annotations

import glob
import hashlib
import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import __version__
from .clustering import (
    LabeledPartition,
    adjusted_rand_index,
    confusion_and_align,
    kmeans,
    purity,
    silhouette,
)
from .errors import CoverageError, ValidationError
from .formats import (
    read_partition_csv,
    read_vector,
    write_embedding_csv,
    write_embedding_spectrum,
    write_matrix,
    write_matrix_csv,
    write_partition_csv,
)
from .mds import DEFAULT_EPSILON, Embedding, reconstruction_report, torgerson
from .metricspace import (
    MaskedDistanceMatrix,
    aggregate,
    coverage,
    distance_matrix,
    drop_unobserved,
    impute,
)
from .treelayout import (
    Layout,
    SpanningTree,
    export_layout,
    kamada_kawai,
    minimum_spanning_tree,
    render_svg,
)

__all__ = [
    "RunSpec",
    "PipelineConfig",
    "PipelineResult",
    "run_pipeline",
    "resolve_threads",
    "layout_safe_tree",
]

THREADS_ENV_VAR = "LANGGEO_THREADS"


@dataclass(frozen=True)
class RunSpec:
    """One (model, corpus) run: where to find its per-language vector files."""

    model_tag: str
    corpus_tag: str
    vectors: tuple[str, ...]

    def __post_init__(self):
        if not self.vectors:
            raise ValidationError(
                f"run ({self.model_tag}, {self.corpus_tag}) lists no vector files"
            )
        object.__setattr__(self, "vectors", tuple(str(p) for p in self.vectors))

    def expand(self, base: Path) -> list[Path]:
        paths: list[Path] = []
        for pattern in self.vectors:
            candidate = Path(pattern)
            if not candidate.is_absolute():
                candidate = base / pattern
            if glob.has_magic(pattern):
                matches = sorted(glob.glob(str(candidate)))
                if not matches:
                    raise ValidationError(f"pattern {pattern!r} matches no files")
                paths.extend(Path(m) for m in matches)
            else:
                paths.append(candidate)
        return paths


@dataclass(frozen=True)
class PipelineConfig:
    """Everything a pipeline invocation needs; serializable as JSON."""

    runs: tuple[RunSpec, ...]
    output_dir: str = "langgeo-out"
    epsilon: float = DEFAULT_EPSILON
    seed: int = 0
    restarts: int = 10
    references: tuple[tuple[str, str], ...] = ()  # (name, partition csv path)
    missing_pairs: str | float = "error"  # "error" | "drop" | imputation constant
    threads: Optional[int] = None
    base_dir: str = "."

    def __post_init__(self):
        if not self.runs:
            raise ValidationError("pipeline needs at least one run")
        keys = [(r.model_tag, r.corpus_tag) for r in self.runs]
        if len(set(keys)) != len(keys):
            raise ValidationError(f"duplicate (model, corpus) runs in {keys}")
        if isinstance(self.missing_pairs, str):
            if self.missing_pairs not in ("error", "drop"):
                raise ValidationError(
                    'missing_pairs must be "error", "drop", or a number'
                )
        else:
            object.__setattr__(self, "missing_pairs", float(self.missing_pairs))
        object.__setattr__(self, "references", tuple(self.references))

    @classmethod
    def from_dict(cls, doc: dict, base_dir: str = ".") -> "PipelineConfig":
        try:
            runs = tuple(
                RunSpec(
                    model_tag=entry["model"],
                    corpus_tag=entry["corpus"],
                    vectors=tuple(entry["vectors"]),
                )
                for entry in doc["runs"]
            )
        except (KeyError, TypeError) as exc:
            raise ValidationError(f"malformed pipeline config: {exc}") from exc
        references = tuple(sorted(doc.get("references", {}).items()))
        return cls(
            runs=runs,
            output_dir=doc.get("output_dir", "langgeo-out"),
            epsilon=float(doc.get("epsilon", DEFAULT_EPSILON)),
            seed=int(doc.get("seed", 0)),
            restarts=int(doc.get("restarts", 10)),
            references=references,
            missing_pairs=doc.get("missing_pairs", "error"),
            threads=doc.get("threads"),
            base_dir=base_dir,
        )

    @classmethod
    def from_json(cls, path: str | Path) -> "PipelineConfig":
        path = Path(path)
        try:
            doc = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise ValidationError(f"config {path.name} is not valid JSON: {exc}") from exc
        return cls.from_dict(doc, base_dir=str(path.parent))


def resolve_threads(flag: Optional[int], n_tasks: int) -> int:
    """Thread cap: explicit flag wins over LANGGEO_THREADS, else task count."""
    if flag is None:
        env = os.environ.get(THREADS_ENV_VAR)
        if env is not None:
            try:
                flag = int(env)
            except ValueError:
                raise ValidationError(
                    f"{THREADS_ENV_VAR}={env!r} is not an integer"
                ) from None
    if flag is None:
        flag = min(n_tasks, os.cpu_count() or 1)
    if flag < 1:
        raise ValidationError("thread cap must be >= 1")
    return min(flag, n_tasks)


def layout_safe_tree(tree: SpanningTree) -> SpanningTree:
    """Floor zero-weight edges so layout targets stay positive.

    Identical languages produce zero Hamming distances; the spring model
    needs strictly positive targets, so zero edges get a small fraction of
    the smallest positive edge weight (or 1.0 if every edge is zero).
    """
    weights = [w for _, _, w in tree.edges]
    if not weights or min(weights) > 0:
        return tree
    positive = [w for w in weights if w > 0]
    floor = min(positive) * 1e-3 if positive else 1.0
    edges = tuple((i, j, w if w > 0 else floor) for i, j, w in tree.edges)
    total = float(sum(w for _, _, w in edges))
    return SpanningTree(nodes=tree.nodes, edges=edges, total_weight=total)


@dataclass
class PipelineResult:
    """In-memory handles to everything the pipeline wrote."""

    output_dir: Path
    run_matrices: dict[tuple[str, str], MaskedDistanceMatrix]
    aggregate_matrix: MaskedDistanceMatrix
    embedded_matrix: MaskedDistanceMatrix
    embedding: Embedding
    metrics: dict[str, dict]
    tree: SpanningTree
    layout: Layout
    manifest: dict


def _sha256(path: Path) -> str:
    digest = hashlib.sha256()
    digest.update(path.read_bytes())
    return digest.hexdigest()


def _load_run(
    run: RunSpec, base: Path
) -> tuple[MaskedDistanceMatrix, list[dict]]:
    paths = run.expand(base)
    vectors = []
    records = []
    for path in paths:
        vector = read_vector(path)
        vectors.append(vector)
        records.append(
            {
                "path": str(path),
                "sha256": _sha256(path),
                "language": vector.language_tag,
                "model": vector.model_tag,
                "corpus": vector.corpus_tag,
            }
        )
    order = np.argsort([v.language_tag for v in vectors], kind="stable")
    vectors = [vectors[i] for i in order]
    records = [records[int(i)] for i in order]
    matrix = distance_matrix(vectors)
    return matrix, records


def _apply_missing_policy(
    matrix: MaskedDistanceMatrix, policy: str | float
) -> tuple[MaskedDistanceMatrix, dict]:
    report = coverage(matrix)
    info = {
        "policy": policy if isinstance(policy, str) else "impute",
        "missing_pairs": [list(p) for p in report.missing_pairs],
    }
    if report.complete:
        return matrix, info
    if policy == "error":
        raise CoverageError(
            f"{len(report.missing_pairs)} language pairs are observed in no run; "
            'rerun with missing_pairs="drop" or an imputation constant',
            report=report,
        )
    if policy == "drop":
        reduced = drop_unobserved(matrix)
        info["dropped_languages"] = sorted(set(matrix.labels) - set(reduced.labels))
        return reduced, info
    info["imputed_value"] = float(policy)
    return impute(matrix, float(policy)), info


def _safe_name(tag: str) -> str:
    return "".join(c if c.isalnum() or c in "-_." else "_" for c in tag)


def run_pipeline(config: PipelineConfig) -> PipelineResult:
    base = Path(config.base_dir)
    out = Path(config.output_dir)
    if not out.is_absolute():
        out = base / out
    out.mkdir(parents=True, exist_ok=True)
    (out / "distmat").mkdir(exist_ok=True)

    threads = resolve_threads(config.threads, len(config.runs))
    with ThreadPoolExecutor(max_workers=threads) as pool:
        loaded = list(pool.map(lambda run: _load_run(run, base), config.runs))

    run_matrices: dict[tuple[str, str], MaskedDistanceMatrix] = {}
    vector_records = []
    for run, (matrix, records) in zip(config.runs, loaded):
        key = (run.model_tag, run.corpus_tag)
        run_matrices[key] = matrix
        vector_records.extend(records)
        stem = f"{_safe_name(run.model_tag)}_{_safe_name(run.corpus_tag)}"
        write_matrix(out / "distmat" / f"{stem}.lgd", matrix)
        write_matrix_csv(out / "distmat" / f"{stem}.csv", matrix)

    universe = sorted({label for m in run_matrices.values() for label in m.labels})
    combined = aggregate(list(run_matrices.values()), universe)
    write_matrix(out / "aggregate.lgd", combined)
    write_matrix_csv(out / "aggregate.csv", combined)

    embedded_matrix, coverage_info = _apply_missing_policy(
        combined, config.missing_pairs
    )
    (out / "coverage.json").write_text(
        json.dumps(coverage_info, indent=2, sort_keys=True) + "\n"
    )

    embedding = torgerson(embedded_matrix, epsilon=config.epsilon)
    write_embedding_csv(out / "embedding.csv", embedding)
    write_embedding_spectrum(out / "embedding.spectrum.json", embedding)
    recon = reconstruction_report(embedded_matrix, embedding)

    metrics: dict[str, dict] = {}
    for name, ref_path in config.references:
        path = Path(ref_path)
        if not path.is_absolute():
            path = base / path
        reference = read_partition_csv(path)
        restricted = _restrict(reference, embedding)
        predicted = kmeans(
            embedding, reference.k, seed=config.seed, restarts=config.restarts
        )
        metrics[name] = {
            "k": reference.k,
            "silhouette": silhouette(predicted, embedding=embedding),
            "ari": adjusted_rand_index(predicted, restricted),
            "purity": purity(predicted, restricted),
        }
        confusion, perm = confusion_and_align(predicted, restricted)
        _write_confusion_csv(
            out / f"confusion_{_safe_name(name)}.csv", confusion, perm
        )
        write_partition_csv(out / f"clusters_{_safe_name(name)}.csv", predicted)
    if metrics:
        (out / "metrics.json").write_text(
            json.dumps(metrics, indent=2, sort_keys=True) + "\n"
        )

    tree = minimum_spanning_tree(embedded_matrix)
    layout = kamada_kawai(layout_safe_tree(tree))
    groups = None
    if config.references:
        first = Path(config.references[0][1])
        if not first.is_absolute():
            first = base / first
        candidate = read_partition_csv(first)
        if all(t in candidate.assignment for t in tree.nodes):
            groups = candidate
    document = export_layout(tree, layout, node_labels=groups)
    (out / "layout.json").write_text(
        json.dumps(document, indent=2, sort_keys=True) + "\n"
    )
    (out / "layout.svg").write_text(render_svg(tree, layout, node_labels=groups) + "\n")

    manifest = {
        "tool": {"name": "langgeo", "version": __version__},
        "created_at": datetime.now(timezone.utc).isoformat(),
        "seed": config.seed,
        "restarts": config.restarts,
        "epsilon": config.epsilon,
        "missing_pairs_policy": coverage_info,
        "runs": [
            {
                "model": run.model_tag,
                "corpus": run.corpus_tag,
                "languages": len(run_matrices[(run.model_tag, run.corpus_tag)].labels),
            }
            for run in config.runs
        ],
        "vectors": vector_records,
        "vector_count": len(vector_records),
        "languages": universe,
        "embedded_languages": list(embedded_matrix.labels),
        "embedding_dim": embedding.dim,
        "reconstruction": {
            "max_abs_error": recon.max_abs_error,
            "mean_abs_error": recon.mean_abs_error,
            "negative_eigenvalue_mass": recon.negative_eigenvalue_mass,
        },
        "mst_total_weight": tree.total_weight,
        "layout_stress": layout.stress,
        "references": {name: path for name, path in config.references},
    }
    (out / "manifest.json").write_text(
        json.dumps(manifest, indent=2, sort_keys=True) + "\n"
    )

    return PipelineResult(
        output_dir=out,
        run_matrices=run_matrices,
        aggregate_matrix=combined,
        embedded_matrix=embedded_matrix,
        embedding=embedding,
        metrics=metrics,
        tree=tree,
        layout=layout,
        manifest=manifest,
    )


def _restrict(reference: LabeledPartition, emb: Embedding) -> LabeledPartition:
    missing = [tag for tag in emb.labels if tag not in reference.assignment]
    if missing:
        raise ValidationError(f"reference partition does not cover {missing}")
    return LabeledPartition(
        {tag: reference.assignment[tag] for tag in emb.labels},
        reference.label_names,
    )


def _write_confusion_csv(path: Path, confusion, perm: Sequence[int]) -> None:
    import csv

    r = len(confusion.row_names)
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["cluster", *confusion.col_names])
        for row in perm:
            if row >= r:  # padding row: reference label without a cluster
                continue
            writer.writerow(
                [confusion.row_names[row], *confusion.counts[row].tolist()]
            )
