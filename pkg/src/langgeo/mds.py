"""Classical (Torgerson) multidimensional scaling with spectrum diagnostics.

Double-center the squared distances, eigendecompose, and keep the dimensions
whose eigenvalues exceed a threshold. Negative eigenvalues (inevitable when
the input is an averaged Hamming matrix rather than a Euclidean one) are
dropped, not clamped; their magnitude is reported so embedding distortion is
visible instead of hidden.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import ValidationError
from .metricspace import MaskedDistanceMatrix

__all__ = [
    "DEFAULT_EPSILON",
    "Embedding",
    "ReconstructionReport",
    "torgerson",
    "reconstruction_report",
]

DEFAULT_EPSILON = 1e-10


@dataclass(frozen=True)
class Embedding:
    """Euclidean coordinates for n languages in d dimensions.

    `eigenvalues` holds the retained spectrum (descending, all > epsilon);
    `dropped_spectrum` holds everything else, including negatives. Instances
    loaded from CSV carry coordinates and labels only.
    """

    coordinates: np.ndarray
    labels: tuple[str, ...]
    eigenvalues: Optional[np.ndarray] = None
    dropped_spectrum: Optional[np.ndarray] = None
    epsilon: Optional[float] = None

    def __post_init__(self):
        coords = np.asarray(self.coordinates, dtype=np.float64)
        if coords.ndim != 2:
            raise ValidationError(f"coordinates must be 2-D, got shape {coords.shape}")
        labels = tuple(str(l) for l in self.labels)
        if coords.shape[0] != len(labels):
            raise ValidationError(
                f"{coords.shape[0]} coordinate rows for {len(labels)} labels"
            )
        if coords.shape[1] > coords.shape[0]:
            raise ValidationError("embedding dimension exceeds point count")
        if not np.all(np.isfinite(coords)):
            raise ValidationError("coordinates contain non-finite entries")
        object.__setattr__(self, "coordinates", coords)
        object.__setattr__(self, "labels", labels)
        if self.eigenvalues is not None:
            object.__setattr__(
                self, "eigenvalues", np.asarray(self.eigenvalues, dtype=np.float64)
            )
        if self.dropped_spectrum is not None:
            object.__setattr__(
                self,
                "dropped_spectrum",
                np.asarray(self.dropped_spectrum, dtype=np.float64),
            )

    @property
    def n(self) -> int:
        return self.coordinates.shape[0]

    @property
    def dim(self) -> int:
        return self.coordinates.shape[1]

    def pairwise_distances(self) -> np.ndarray:
        diff = self.coordinates[:, None, :] - self.coordinates[None, :, :]
        return np.sqrt(np.sum(diff * diff, axis=2))


def _fix_signs(vectors: np.ndarray) -> np.ndarray:
    """Make each column's first non-negligible coordinate positive."""
    fixed = vectors.copy()
    for j in range(fixed.shape[1]):
        col = fixed[:, j]
        scale = np.max(np.abs(col))
        if scale == 0.0:
            continue
        nonzero = np.nonzero(np.abs(col) > 1e-12 * scale)[0]
        if nonzero.size and col[nonzero[0]] < 0:
            fixed[:, j] = -col
    return fixed


def torgerson(
    D: MaskedDistanceMatrix, epsilon: float = DEFAULT_EPSILON
) -> Embedding:
    """Classical MDS: coordinates whose Euclidean distances reproduce D.

    Steps: J = I - (1/n) 11^T, B = -1/2 J (D o D) J, symmetric
    eigendecomposition, descending sort (ties broken by original index),
    retain eigenvalues > epsilon, Y = V_d diag(sqrt(lambda)).
    """
    D.require_fully_observed("classical MDS")
    n = D.n
    if n < 2:
        raise ValidationError("need at least two languages to embed")
    centering = np.eye(n) - np.ones((n, n)) / n
    gram = -0.5 * centering @ (D.values * D.values) @ centering
    gram = (gram + gram.T) / 2.0  # scrub asymmetric rounding noise
    evals, evecs = np.linalg.eigh(gram)
    order = np.argsort(-evals, kind="stable")
    evals = evals[order]
    evecs = _fix_signs(evecs[:, order])
    keep = evals > epsilon
    coords = evecs[:, keep] * np.sqrt(evals[keep])[np.newaxis, :]
    return Embedding(
        coordinates=coords,
        labels=D.labels,
        eigenvalues=evals[keep],
        dropped_spectrum=evals[~keep],
        epsilon=float(epsilon),
    )


@dataclass(frozen=True)
class ReconstructionReport:
    """How far the embedding distances drift from the input matrix."""

    max_abs_error: float
    mean_abs_error: float
    negative_eigenvalue_mass: float


def reconstruction_report(
    D: MaskedDistanceMatrix, emb: Embedding
) -> ReconstructionReport:
    """Compare D against the embedding's Euclidean distances.

    negative_eigenvalue_mass is sum(|lambda| over negative) / sum(|lambda|)
    across the full spectrum; it quantifies how non-Euclidean the input was.
    """
    if D.labels != emb.labels:
        raise ValidationError("distance matrix and embedding labels differ")
    recon = emb.pairwise_distances()
    off = ~np.eye(D.n, dtype=bool)
    errors = np.abs(recon - D.values)[off & D.observed]
    if emb.eigenvalues is None or emb.dropped_spectrum is None:
        raise ValidationError("embedding carries no spectrum to report on")
    spectrum = np.concatenate([emb.eigenvalues, emb.dropped_spectrum])
    total = np.sum(np.abs(spectrum))
    negative = np.sum(np.abs(spectrum[spectrum < 0]))
    return ReconstructionReport(
        max_abs_error=float(errors.max()) if errors.size else 0.0,
        mean_abs_error=float(errors.mean()) if errors.size else 0.0,
        negative_eigenvalue_mass=float(negative / total) if total > 0 else 0.0,
    )
