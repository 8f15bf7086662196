"""k-means over embeddings and partition-agreement metrics.

k-means uses k-means++ seeding with Lloyd iterations; restarts run with seeds
seed+0..seed+restarts-1 and the best within-cluster sum of squares wins, ties
going to the lowest restart index. Evaluation against a reference partition
reports silhouette, adjusted Rand index, and purity, and aligns the confusion
matrix rows to reference columns with the Hungarian method.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import comb
from typing import Mapping, Optional, Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment

from .errors import ValidationError
from .mds import Embedding
from .metricspace import MaskedDistanceMatrix

__all__ = [
    "LabeledPartition",
    "ConfusionMatrix",
    "kmeans",
    "silhouette",
    "adjusted_rand_index",
    "purity",
    "confusion_and_align",
    "evaluate",
]

LLOYD_ITERATION_CAP = 300


@dataclass(frozen=True)
class LabeledPartition:
    """Assignment of every language to exactly one dense label id."""

    assignment: Mapping[str, int]
    label_names: tuple[str, ...]

    def __post_init__(self):
        assignment = {str(k): int(v) for k, v in self.assignment.items()}
        names = tuple(str(n) for n in self.label_names)
        if not assignment:
            raise ValidationError("partition must cover at least one language")
        if not names:
            raise ValidationError("partition must declare at least one label")
        for tag, label in assignment.items():
            if not 0 <= label < len(names):
                raise ValidationError(
                    f"{tag!r} has label {label}, outside 0..{len(names) - 1}"
                )
        object.__setattr__(self, "assignment", assignment)
        object.__setattr__(self, "label_names", names)

    @property
    def k(self) -> int:
        return len(self.label_names)

    @property
    def languages(self) -> frozenset[str]:
        return frozenset(self.assignment)

    @classmethod
    def from_names(cls, named: Mapping[str, str]) -> "LabeledPartition":
        """Build dense ids from string labels, ordered by sorted label name."""
        names = tuple(sorted(set(named.values())))
        ids = {name: i for i, name in enumerate(names)}
        return cls({tag: ids[label] for tag, label in named.items()}, names)

    def labels_for(self, order: Sequence[str]) -> np.ndarray:
        missing = [tag for tag in order if tag not in self.assignment]
        if missing:
            raise ValidationError(f"partition does not cover {missing}")
        return np.array([self.assignment[tag] for tag in order], dtype=np.int64)


def _points_and_labels(emb: Embedding) -> tuple[np.ndarray, tuple[str, ...]]:
    if emb.n == 0:
        raise ValidationError("empty embedding")
    return emb.coordinates, emb.labels


def _kmeans_pp(points: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = points.shape[0]
    centers = np.empty((k, points.shape[1]))
    centers[0] = points[rng.integers(n)]
    d2 = np.sum((points - centers[0]) ** 2, axis=1)
    for j in range(1, k):
        total = d2.sum()
        if total > 0:
            idx = rng.choice(n, p=d2 / total)
        else:
            idx = rng.integers(n)  # all mass on existing centers: duplicates
        centers[j] = points[idx]
        d2 = np.minimum(d2, np.sum((points - centers[j]) ** 2, axis=1))
    return centers


def _assign(points: np.ndarray, centers: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    d2 = np.sum((points[:, None, :] - centers[None, :, :]) ** 2, axis=2)
    labels = np.argmin(d2, axis=1)  # ties resolve to the lowest cluster index
    return labels, d2


def _repair_empty(
    points: np.ndarray, centers: np.ndarray, labels: np.ndarray, d2: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Re-seed each empty cluster with the point farthest from its centroid."""
    k = centers.shape[0]
    while True:
        counts = np.bincount(labels, minlength=k)
        empty = np.nonzero(counts == 0)[0]
        if empty.size == 0:
            return labels, centers
        own = d2[np.arange(points.shape[0]), labels]
        farthest = int(np.argmax(own))  # deterministic: first max
        centers = centers.copy()
        centers[empty[0]] = points[farthest]
        labels, d2 = _assign(points, centers)


def _lloyd(
    points: np.ndarray, centers: np.ndarray
) -> tuple[np.ndarray, float, int]:
    previous = None
    labels = None
    objective = np.inf
    for iteration in range(LLOYD_ITERATION_CAP):
        labels, d2 = _assign(points, centers)
        labels, centers = _repair_empty(points, centers, labels, d2)
        new_objective = float(
            np.sum((points - centers[labels]) ** 2)
        )
        # descent property of Lloyd iterations; tolerance covers rounding
        assert new_objective <= objective * (1 + 1e-12) + 1e-12, (
            new_objective,
            objective,
        )
        objective = new_objective
        if previous is not None and np.array_equal(labels, previous):
            break
        previous = labels
        for j in range(centers.shape[0]):
            members = points[labels == j]
            centers[j] = members.mean(axis=0)
    return labels, objective, iteration + 1


def kmeans(
    emb: Embedding, k: int, seed: int = 0, restarts: int = 10
) -> LabeledPartition:
    """Best-of-restarts k-means partition of the embedded languages."""
    points, tags = _points_and_labels(emb)
    n = points.shape[0]
    if not 1 <= k <= n:
        raise ValidationError(f"k={k} must be between 1 and n={n}")
    if restarts < 1:
        raise ValidationError("restarts must be >= 1")
    best_labels = None
    best_objective = np.inf
    for r in range(restarts):
        rng = np.random.default_rng(seed + r)
        centers = _kmeans_pp(points, k, rng)
        labels, objective, _ = _lloyd(points, centers.copy())
        if objective < best_objective:
            best_objective = objective
            best_labels = labels
    assignment = {tag: int(label) for tag, label in zip(tags, best_labels)}
    names = tuple(f"cluster_{j}" for j in range(k))
    return LabeledPartition(assignment, names)


def _pairwise_from_embedding(emb: Embedding) -> tuple[np.ndarray, tuple[str, ...]]:
    return emb.pairwise_distances(), emb.labels


def silhouette(
    partition: LabeledPartition,
    embedding: Optional[Embedding] = None,
    distances: Optional[MaskedDistanceMatrix] = None,
) -> float:
    """Mean over points of (b - a) / max(a, b).

    a is the mean distance to the point's own cluster (excluding itself), b
    the smallest mean distance to any other cluster. Singleton points score 0.
    Distances come from the embedding (Euclidean) by default, or from a
    precomputed matrix.
    """
    if (embedding is None) == (distances is None):
        raise ValidationError("provide exactly one of embedding or distances")
    if embedding is not None:
        dmat, order = _pairwise_from_embedding(embedding)
    else:
        distances.require_fully_observed("silhouette")
        dmat, order = distances.values, distances.labels
    y = partition.labels_for(order)
    counts = np.bincount(y, minlength=partition.k)
    present = np.nonzero(counts)[0]
    if present.size < 2:
        raise ValidationError("silhouette needs at least two clusters")
    if present.size != partition.k:
        raise ValidationError("silhouette requires every cluster to be nonempty")
    n = len(order)
    scores = np.zeros(n)
    cluster_sums = np.stack(
        [dmat[:, y == label].sum(axis=1) for label in range(partition.k)], axis=1
    )
    for i in range(n):
        own = y[i]
        if counts[own] == 1:
            scores[i] = 0.0
            continue
        a = cluster_sums[i, own] / (counts[own] - 1)  # excludes the zero self-term
        others = [lab for lab in range(partition.k) if lab != own]
        b = min(cluster_sums[i, lab] / counts[lab] for lab in others)
        denom = max(a, b)
        scores[i] = 0.0 if denom == 0.0 else (b - a) / denom
    return float(scores.mean())


def _contingency(
    a: LabeledPartition, b: LabeledPartition
) -> tuple[np.ndarray, list[str]]:
    if a.languages != b.languages:
        raise ValidationError("partitions cover different language sets")
    order = sorted(a.languages)
    ya = a.labels_for(order)
    yb = b.labels_for(order)
    table = np.zeros((a.k, b.k), dtype=np.int64)
    np.add.at(table, (ya, yb), 1)
    return table, order


def adjusted_rand_index(a: LabeledPartition, b: LabeledPartition) -> float:
    """Pair-counting agreement corrected for chance; 1 iff identical."""
    table, order = _contingency(a, b)
    n = len(order)
    sum_ij = sum(comb(int(v), 2) for v in table.ravel())
    sum_a = sum(comb(int(v), 2) for v in table.sum(axis=1))
    sum_b = sum(comb(int(v), 2) for v in table.sum(axis=0))
    pairs = comb(n, 2)
    if pairs == 0:
        return 1.0
    expected = sum_a * sum_b / pairs
    maximum = (sum_a + sum_b) / 2
    if maximum == expected:
        # both partitions trivial (all singletons or one block): identical
        return 1.0
    return float((sum_ij - expected) / (maximum - expected))


def purity(pred: LabeledPartition, truth: LabeledPartition) -> float:
    """Fraction of points sharing their cluster's majority reference label."""
    table, order = _contingency(pred, truth)
    return float(table.max(axis=1).sum() / len(order))


@dataclass(frozen=True)
class ConfusionMatrix:
    """Counts of languages per (predicted cluster, reference label) cell."""

    counts: np.ndarray
    row_names: tuple[str, ...]
    col_names: tuple[str, ...]

    def __post_init__(self):
        counts = np.asarray(self.counts, dtype=np.int64)
        if counts.shape != (len(self.row_names), len(self.col_names)):
            raise ValidationError("confusion matrix shape does not match names")
        if np.any(counts < 0):
            raise ValidationError("confusion counts must be nonnegative")
        object.__setattr__(self, "counts", counts)
        object.__setattr__(self, "row_names", tuple(self.row_names))
        object.__setattr__(self, "col_names", tuple(self.col_names))

    @property
    def total(self) -> int:
        return int(self.counts.sum())


def confusion_and_align(
    pred: LabeledPartition, truth: LabeledPartition
) -> tuple[ConfusionMatrix, tuple[int, ...]]:
    """Contingency matrix plus the row order maximizing the aligned trace.

    The counts are zero-padded to square when shapes differ, so the min(r, c)
    best row/column pairs are matched by optimal assignment. The returned
    permutation reorders the rows of that padded matrix: entry perm[j] is the
    row matched to column j, and indices >= r refer to all-zero padding rows
    (reference labels left without a cluster). For square inputs perm is a
    plain permutation of the real rows.
    """
    table, _ = _contingency(pred, truth)
    r, c = table.shape
    size = max(r, c)
    padded = np.zeros((size, size), dtype=np.int64)
    padded[:r, :c] = table
    rows, cols = linear_sum_assignment(-padded)
    matched_row_for_col = {int(col): int(row) for row, col in zip(rows, cols)}
    perm = [matched_row_for_col[j] for j in range(c)]
    # rows matched to padded columns (r > c case) keep their original order
    matched = set(perm)
    perm.extend(row for row in range(size) if row not in matched)
    matrix = ConfusionMatrix(
        counts=table,
        row_names=pred.label_names,
        col_names=truth.label_names,
    )
    return matrix, tuple(perm)


def evaluate(
    emb: Embedding,
    reference: LabeledPartition,
    seed: int = 0,
    restarts: int = 10,
    distances: Optional[MaskedDistanceMatrix] = None,
) -> dict:
    """k-means with k = number of reference labels, then all three metrics.

    Silhouette is computed on the embedding unless a precomputed distance
    matrix is supplied.
    """
    missing = [tag for tag in emb.labels if tag not in reference.assignment]
    if missing:
        raise ValidationError(f"reference partition does not cover {missing}")
    predicted = kmeans(emb, reference.k, seed=seed, restarts=restarts)
    restricted = LabeledPartition(
        {tag: reference.assignment[tag] for tag in emb.labels},
        reference.label_names,
    )
    if distances is not None:
        sil = silhouette(predicted, distances=distances)
    else:
        sil = silhouette(predicted, embedding=emb)
    return {
        "k": reference.k,
        "silhouette": sil,
        "ari": adjusted_rand_index(predicted, restricted),
        "purity": purity(predicted, restricted),
    }
