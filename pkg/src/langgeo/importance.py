"""Layer Hessians from calibration activations and per-weight importance scores.

For a linear layer with weights W and stacked input activations X, the damped
Hessian is H = X^T X + lam*I. The importance of weight (i, j) is
W_ij^2 / diag(H^-1)_j, and the error increase for optimally zeroing a single
weight w_q in a row is E_q = w_q^2 / (2 * (H^-1)_qq), with the compensating
row update delta = -H^-1 e_q * w_q / (H^-1)_qq.

All arithmetic is done in float64 regardless of input dtype: the downstream
median threshold is sensitive to ties created by rounding.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
from scipy.linalg import cho_factor, cho_solve, solve_triangular

from .errors import NumericError, ValidationError

__all__ = [
    "CalibrationMatrix",
    "LayerWeights",
    "DampingPolicy",
    "DEFAULT_DAMPING",
    "Hessian",
    "ImportanceMatrix",
    "WeightUpdate",
    "accumulate_hessian",
    "inverse_hessian_diagonal",
    "score_layer",
    "obd_error_increase",
    "optimal_update",
]


def _as_matrix(data, name: str) -> np.ndarray:
    arr = np.asarray(data, dtype=np.float64)
    if arr.ndim != 2:
        raise ValidationError(f"{name} must be 2-D, got shape {arr.shape}")
    if arr.shape[0] < 1 or arr.shape[1] < 1:
        raise ValidationError(f"{name} must be nonempty, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValidationError(f"{name} contains non-finite entries")
    return arr


@dataclass(frozen=True)
class CalibrationMatrix:
    """Stacked pre-activation inputs to one linear layer, one row per sample."""

    data: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "data", _as_matrix(self.data, "calibration matrix"))

    @property
    def n_samples(self) -> int:
        return self.data.shape[0]

    @property
    def d_in(self) -> int:
        return self.data.shape[1]


@dataclass(frozen=True)
class LayerWeights:
    """Weight matrix of one linear layer (d_out x d_in)."""

    data: np.ndarray
    layer_id: int = 0

    def __post_init__(self):
        object.__setattr__(self, "data", _as_matrix(self.data, "layer weights"))

    @property
    def d_out(self) -> int:
        return self.data.shape[0]

    @property
    def d_in(self) -> int:
        return self.data.shape[1]


@dataclass(frozen=True)
class DampingPolicy:
    """Damping is either a factor relative to mean(diag(X^T X)) or absolute."""

    mode: str
    value: float

    def __post_init__(self):
        if self.mode not in ("relative", "absolute"):
            raise ValidationError(f"unknown damping mode {self.mode!r}")
        if not np.isfinite(self.value) or self.value < 0:
            raise ValidationError("damping value must be finite and >= 0")

    @classmethod
    def relative(cls, rho: float = 0.01) -> "DampingPolicy":
        return cls("relative", rho)

    @classmethod
    def absolute(cls, lam: float) -> "DampingPolicy":
        return cls("absolute", lam)

    def resolve(self, gram: np.ndarray) -> float:
        if self.mode == "absolute":
            return float(self.value)
        return float(self.value * np.mean(np.diag(gram)))


DEFAULT_DAMPING = DampingPolicy.relative(0.01)


@dataclass(frozen=True)
class Hessian:
    """Damped activation Gram matrix; symmetric positive definite by contract.

    `damping` records the lambda actually added to the diagonal.
    """

    data: np.ndarray
    damping: float = 0.0

    def __post_init__(self):
        arr = _as_matrix(self.data, "Hessian")
        if arr.shape[0] != arr.shape[1]:
            raise ValidationError(f"Hessian must be square, got shape {arr.shape}")
        if not np.allclose(arr, arr.T, rtol=0.0, atol=1e-9):
            raise ValidationError("Hessian is not symmetric within 1e-9")
        object.__setattr__(self, "data", arr)
        try:
            np.linalg.cholesky(arr)
        except np.linalg.LinAlgError:
            raise NumericError("singular Hessian, increase damping") from None

    @property
    def d(self) -> int:
        return self.data.shape[0]


@dataclass(frozen=True)
class ImportanceMatrix:
    """Per-weight importance scores, same shape as the source layer weights."""

    data: np.ndarray
    layer_id: int = 0

    def __post_init__(self):
        arr = _as_matrix(self.data, "importance matrix")
        if np.any(arr < 0):
            raise ValidationError("importance scores must be nonnegative")
        object.__setattr__(self, "data", arr)


@dataclass(frozen=True)
class WeightUpdate:
    """Optimal row update that zeroes weight `pruned_index`."""

    delta: np.ndarray
    pruned_index: int
    error_increase: float


def accumulate_hessian(
    batches: Iterable[CalibrationMatrix | np.ndarray],
    damping: DampingPolicy = DEFAULT_DAMPING,
) -> Hessian:
    """Sum X_b^T X_b over calibration batches and add the resolved damping.

    The result is identical (to rounding) however the calibration rows are
    split across batches.
    """
    gram = None
    d_in = None
    for batch in batches:
        if not isinstance(batch, CalibrationMatrix):
            batch = CalibrationMatrix(batch)
        if d_in is None:
            d_in = batch.d_in
            gram = np.zeros((d_in, d_in))
        elif batch.d_in != d_in:
            raise ValidationError(
                f"calibration batches disagree on d_in: {d_in} vs {batch.d_in}"
            )
        gram += batch.data.T @ batch.data
    if gram is None:
        raise ValidationError("need at least one calibration batch")
    gram = (gram + gram.T) / 2.0  # scrub asymmetric rounding noise
    lam = damping.resolve(gram)
    return Hessian(gram + lam * np.eye(d_in), damping=lam)


def _cholesky_lower(hessian: Hessian) -> np.ndarray:
    try:
        return np.linalg.cholesky(hessian.data)
    except np.linalg.LinAlgError:
        raise NumericError("singular Hessian, increase damping") from None


def inverse_hessian_diagonal(hessian: Hessian) -> np.ndarray:
    """diag(H^-1) via the Cholesky factor: (H^-1)_jj = ||L^-1 e_j||^2.

    Solves d unit systems instead of forming the full inverse.
    """
    low = _cholesky_lower(hessian)
    linv = solve_triangular(low, np.eye(hessian.d), lower=True)
    return np.sum(linv * linv, axis=0)


def score_layer(weights: LayerWeights, hessian: Hessian) -> ImportanceMatrix:
    """Importance scores S_ij = W_ij^2 / diag(H^-1)_j."""
    if not isinstance(weights, LayerWeights):
        weights = LayerWeights(weights)
    if weights.d_in != hessian.d:
        raise ValidationError(
            f"weights d_in={weights.d_in} does not match Hessian d={hessian.d}"
        )
    inv_diag = inverse_hessian_diagonal(hessian)
    scores = weights.data**2 / inv_diag[np.newaxis, :]
    return ImportanceMatrix(scores, layer_id=weights.layer_id)


def _solve_unit(hessian: Hessian, q: int) -> np.ndarray:
    """H^-1 e_q by a symmetric factorization solve."""
    try:
        factor = cho_factor(hessian.data, lower=True)
    except np.linalg.LinAlgError:
        raise NumericError("singular Hessian, increase damping") from None
    unit = np.zeros(hessian.d)
    unit[q] = 1.0
    return cho_solve(factor, unit)


def _check_row(weight_row, hessian: Hessian, q: int) -> np.ndarray:
    row = np.asarray(weight_row, dtype=np.float64)
    if row.ndim != 1:
        raise ValidationError(f"weight row must be 1-D, got shape {row.shape}")
    if not np.all(np.isfinite(row)):
        raise ValidationError("weight row contains non-finite entries")
    if row.shape[0] != hessian.d:
        raise ValidationError(
            f"weight row length {row.shape[0]} does not match Hessian d={hessian.d}"
        )
    if not 0 <= q < hessian.d:
        raise ValidationError(f"index q={q} out of range for d={hessian.d}")
    return row


def obd_error_increase(weight_row, hessian: Hessian, q: int) -> float:
    """Error increase from optimally zeroing weight q: w_q^2 / (2 (H^-1)_qq)."""
    row = _check_row(weight_row, hessian, q)
    inv_qq = _solve_unit(hessian, q)[q]
    return float(0.5 * row[q] ** 2 / inv_qq)


def optimal_update(weight_row, hessian: Hessian, q: int) -> WeightUpdate:
    """Closed-form minimizer of the quadratic error subject to zeroing w_q."""
    row = _check_row(weight_row, hessian, q)
    column = _solve_unit(hessian, q)
    inv_qq = column[q]
    delta = -column * (row[q] / inv_qq)
    err = float(0.5 * row[q] ** 2 / inv_qq)
    return WeightUpdate(delta=delta, pruned_index=q, error_increase=err)
