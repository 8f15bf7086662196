"""Hamming distances between language vectors and masked distance matrices.

Distances are only defined between vectors with identical bit layouts, i.e.
within one (model, corpus) run. Cross-run comparability comes from averaging
the per-run matrices element-wise over the entries where both languages were
observed; pairs observed nowhere stay masked and are surfaced in a coverage
report rather than silently zeroed.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .binarizer import BinaryLanguageVector
from .errors import CoverageError, ValidationError

__all__ = [
    "MaskedDistanceMatrix",
    "CoverageReport",
    "hamming",
    "distance_matrix",
    "aggregate",
    "coverage",
    "drop_unobserved",
    "impute",
]


@dataclass(frozen=True)
class MaskedDistanceMatrix:
    """Symmetric pairwise distances with an observed-entry mask.

    Unobserved entries hold 0.0 by convention (they are meaningless; the
    canonical value keeps serialization deterministic). The diagonal is always
    observed and zero.
    """

    values: np.ndarray
    observed: np.ndarray
    labels: tuple[str, ...]
    provenance: tuple[tuple[str, str], ...] = ()

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        observed = np.asarray(self.observed, dtype=bool)
        labels = tuple(str(l) for l in self.labels)
        n = len(labels)
        if values.shape != (n, n) or observed.shape != (n, n):
            raise ValidationError(
                f"expected {n}x{n} values and mask, got {values.shape} and {observed.shape}"
            )
        if len(set(labels)) != n:
            raise ValidationError("duplicate language labels")
        if not np.array_equal(observed, observed.T):
            raise ValidationError("observed mask is not symmetric")
        if not np.array_equal(values, values.T):
            raise ValidationError("distance values are not symmetric")
        if not np.all(np.isfinite(values)):
            raise ValidationError("distance values contain non-finite entries")
        if not np.all(np.diag(observed)):
            raise ValidationError("diagonal must be observed")
        if np.any(np.diag(values) != 0.0):
            raise ValidationError("diagonal must be zero")
        if np.any(values[observed] < 0.0):
            raise ValidationError("observed distances must be nonnegative")
        if np.any(values[~observed] != 0.0):
            raise ValidationError("unobserved entries must hold the canonical 0.0")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "observed", observed)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(
            self,
            "provenance",
            tuple((str(a), str(b)) for a, b in self.provenance),
        )

    @property
    def n(self) -> int:
        return len(self.labels)

    @property
    def fully_observed(self) -> bool:
        return bool(np.all(self.observed))

    def require_fully_observed(self, context: str = "operation") -> None:
        if not self.fully_observed:
            report = coverage(self)
            raise CoverageError(
                f"{context} requires a fully observed matrix; "
                f"{len(report.missing_pairs)} language pairs are unobserved "
                "(drop the affected languages or impute a constant)",
                report=report,
            )


@dataclass(frozen=True)
class CoverageReport:
    """Which language pairs ended up observed by no run."""

    labels: tuple[str, ...]
    missing_pairs: tuple[tuple[str, str], ...]

    @property
    def complete(self) -> bool:
        return not self.missing_pairs

    def to_dict(self) -> dict:
        return {
            "languages": list(self.labels),
            "missing_pairs": [list(p) for p in self.missing_pairs],
            "complete": self.complete,
        }


def _require_same_layout(x: BinaryLanguageVector, y: BinaryLanguageVector) -> None:
    if x.n_bits != y.n_bits:
        raise ValidationError(
            f"vector bit lengths differ: {x.n_bits} vs {y.n_bits}"
        )
    if x.layer_offsets != y.layer_offsets:
        raise ValidationError("vector layer layouts differ")


def hamming(x: BinaryLanguageVector, y: BinaryLanguageVector) -> int:
    """Number of differing bit positions (popcount of XOR)."""
    _require_same_layout(x, y)
    a = np.frombuffer(x.packed, dtype=np.uint8)
    b = np.frombuffer(y.packed, dtype=np.uint8)
    return int(np.bitwise_count(a ^ b).sum())


def distance_matrix(vectors: Sequence[BinaryLanguageVector]) -> MaskedDistanceMatrix:
    """Fully observed pairwise Hamming distance matrix for one run."""
    if not vectors:
        raise ValidationError("need at least one vector")
    tags = [v.language_tag for v in vectors]
    if len(set(tags)) != len(tags):
        raise ValidationError(f"duplicate language tags in {tags}")
    first = vectors[0]
    for v in vectors[1:]:
        _require_same_layout(first, v)
    rows = np.stack([np.frombuffer(v.packed, dtype=np.uint8) for v in vectors])
    n = len(vectors)
    values = np.zeros((n, n))
    for i in range(n):
        values[i] = np.bitwise_count(rows ^ rows[i]).sum(axis=1)
    values = (values + values.T) / 2.0  # integer counts; halves nothing, mirrors exactly
    prov = tuple(sorted({(v.model_tag, v.corpus_tag) for v in vectors}))
    return MaskedDistanceMatrix(
        values=values,
        observed=np.ones((n, n), dtype=bool),
        labels=tuple(tags),
        provenance=prov,
    )


def aggregate(
    matrices: Sequence[MaskedDistanceMatrix],
    label_universe: Sequence[str],
) -> MaskedDistanceMatrix:
    """Element-wise mean over the runs in which both languages are observed.

    The output mask marks pairs observed by at least one input; use
    `coverage` to find holes before feeding the result to an embedding.
    """
    if not matrices:
        raise ValidationError("need at least one distance matrix")
    labels = tuple(str(l) for l in label_universe)
    if len(set(labels)) != len(labels):
        raise ValidationError("duplicate labels in the universe")
    pos = {label: i for i, label in enumerate(labels)}
    n = len(labels)
    sums = np.zeros((n, n))
    counts = np.zeros((n, n), dtype=np.int64)
    provenance: set[tuple[str, str]] = set()
    for m in matrices:
        missing = [l for l in m.labels if l not in pos]
        if missing:
            raise ValidationError(f"labels {missing} not in the declared universe")
        idx = np.array([pos[l] for l in m.labels])
        grid = np.ix_(idx, idx)
        sums[grid] += np.where(m.observed, m.values, 0.0)
        counts[grid] += m.observed
        provenance.update(m.provenance)
    observed = counts > 0
    values = np.divide(sums, counts, out=np.zeros_like(sums), where=observed)
    values = (values + values.T) / 2.0
    # a language's self-distance is 0 by definition even if it appears nowhere
    np.fill_diagonal(values, 0.0)
    np.fill_diagonal(observed, True)
    return MaskedDistanceMatrix(
        values=values,
        observed=observed,
        labels=labels,
        provenance=tuple(sorted(provenance)),
    )


def coverage(matrix: MaskedDistanceMatrix) -> CoverageReport:
    """List the unobserved off-diagonal pairs of an aggregate matrix."""
    holes = []
    for i in range(matrix.n):
        for j in range(i + 1, matrix.n):
            if not matrix.observed[i, j]:
                holes.append((matrix.labels[i], matrix.labels[j]))
    return CoverageReport(labels=matrix.labels, missing_pairs=tuple(holes))


def drop_unobserved(matrix: MaskedDistanceMatrix) -> MaskedDistanceMatrix:
    """Greedily remove languages until every remaining pair is observed.

    Repeatedly drops the language with the most unobserved pairs (ties broken
    by label order), which removes whole missing languages before touching
    well-covered ones.
    """
    keep = list(range(matrix.n))
    unobs = ~matrix.observed
    while True:
        sub = unobs[np.ix_(keep, keep)]
        holes = sub.sum(axis=1)
        if not holes.any():
            break
        worst = int(np.argmax(holes))  # argmax takes the first max: label order
        del keep[worst]
        if not keep:
            raise ValidationError("no languages left after dropping unobserved pairs")
    idx = np.array(keep)
    return MaskedDistanceMatrix(
        values=matrix.values[np.ix_(idx, idx)],
        observed=matrix.observed[np.ix_(idx, idx)],
        labels=tuple(matrix.labels[i] for i in keep),
        provenance=matrix.provenance,
    )


def impute(matrix: MaskedDistanceMatrix, value: float) -> MaskedDistanceMatrix:
    """Fill every unobserved pair with a caller-chosen constant."""
    if not np.isfinite(value) or value < 0:
        raise ValidationError("imputation constant must be finite and >= 0")
    values = matrix.values.copy()
    values[~matrix.observed] = float(value)
    np.fill_diagonal(values, 0.0)
    return MaskedDistanceMatrix(
        values=values,
        observed=np.ones_like(matrix.observed),
        labels=matrix.labels,
        provenance=matrix.provenance,
    )
