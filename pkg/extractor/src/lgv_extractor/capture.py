"""Activation capture and per-layer weight scoring.

Forward pre-hooks on every targeted linear sub-layer accumulate the
activation Gram matrix X^T X in float64 across calibration batches, never
materializing the full stacked X. Scores are W^2 / diag((X^T X + lam I)^-1)
per layer; bits mark scores strictly above the layer median, flattened
row-major. Layer order follows the model's module traversal order.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
import torch
from torch import nn

from .errors import ExtractionError
from .job import ExtractionJob
from .lgvfile import encode_vector, write_vector_file

# linear sub-layers whose qualified name contains one of these are skipped:
# embeddings and the output head are outside the importance scope
DEFAULT_EXCLUDE = ("embed", "lm_head")
DEFAULT_DAMPING_FACTOR = 0.01


@dataclass
class LayerAccumulator:
    """Running Gram matrix for one linear sub-layer."""

    name: str
    layer_id: int
    weight: np.ndarray
    gram: np.ndarray
    samples: int = 0
    captured: list = field(default_factory=list)
    keep_activations: bool = False

    def update(self, activations: torch.Tensor) -> None:
        flat = activations.detach().reshape(-1, activations.shape[-1])
        x = flat.to(torch.float64).cpu().numpy()
        self.gram += x.T @ x
        self.samples += x.shape[0]
        if self.keep_activations:
            self.captured.append(x)


def targeted_linears(
    model: nn.Module,
    include: Optional[Sequence[str]] = None,
    exclude: Sequence[str] = DEFAULT_EXCLUDE,
) -> list[tuple[str, nn.Linear]]:
    """Linear sub-layers to score, in module traversal order.

    `include` restricts to qualified names containing any of the given
    substrings; by default every linear except embedding/head layers is
    targeted.
    """
    chosen = []
    for name, module in model.named_modules():
        if not isinstance(module, nn.Linear):
            continue
        if include is not None:
            if not any(pattern in name for pattern in include):
                continue
        elif any(pattern in name for pattern in exclude):
            continue
        chosen.append((name, module))
    if not chosen:
        raise ExtractionError("no linear sub-layers matched the include list")
    return chosen


def _median_threshold_bits(scores: np.ndarray) -> np.ndarray:
    flat = scores.ravel(order="C")
    return (flat > np.median(flat)).astype(np.uint8)


def score_from_gram(
    weight: np.ndarray,
    gram: np.ndarray,
    damping_factor: float = DEFAULT_DAMPING_FACTOR,
    damping_absolute: Optional[float] = None,
) -> np.ndarray:
    """W^2 / diag((gram + lam I)^-1) with lam relative to mean(diag(gram))."""
    if damping_absolute is not None:
        lam = float(damping_absolute)
    else:
        lam = damping_factor * float(np.mean(np.diag(gram)))
    damped = gram + lam * np.eye(gram.shape[0])
    inverse = np.linalg.inv(damped)
    return weight.astype(np.float64) ** 2 / np.diag(inverse)[np.newaxis, :]


@dataclass
class CaptureResult:
    layer_names: list[str]
    scores: list[np.ndarray]
    bits_per_layer: list[tuple[int, np.ndarray]]
    payload: bytes


def capture_and_score(
    job: ExtractionJob,
    batches: np.ndarray,
    model: nn.Module,
    include: Optional[Sequence[str]] = None,
    damping_factor: float = DEFAULT_DAMPING_FACTOR,
    damping_absolute: Optional[float] = None,
    dump_wx_layer: Optional[int] = None,
    dump_wx_path: Optional[str] = None,
) -> CaptureResult:
    """Run the calibration batches, score every targeted layer, and write
    the job's `.lgv` file.

    `dump_wx_layer` additionally exports that layer's (W, X) pair to
    `dump_wx_path` as a .npz tensor container for cross-checks against the
    reference scorer (this materializes X for that one layer only).
    """
    model.eval()
    targets = targeted_linears(model, include=include)
    accumulators = []
    handles = []
    try:
        for layer_id, (name, module) in enumerate(targets):
            weight = module.weight.detach().to(torch.float64).cpu().numpy()
            acc = LayerAccumulator(
                name=name,
                layer_id=layer_id,
                weight=weight,
                gram=np.zeros((weight.shape[1], weight.shape[1])),
                keep_activations=(dump_wx_layer == layer_id),
            )

            def hook(module, inputs, acc=acc):
                acc.update(inputs[0])

            try:
                handles.append(module.register_forward_pre_hook(hook))
            except Exception as exc:
                raise ExtractionError(f"cannot hook layer {name!r}: {exc}") from exc
            accumulators.append(acc)

        tokens = torch.from_numpy(np.ascontiguousarray(batches))
        try:
            with torch.no_grad():
                for start in range(0, tokens.shape[0], job.batch_size):
                    model(tokens[start : start + job.batch_size])
        except (MemoryError, torch.cuda.OutOfMemoryError) as exc:
            raise ExtractionError(
                f"out of memory during capture: {exc}; reduce the sequence length"
            ) from exc
        except RuntimeError as exc:
            if "out of memory" in str(exc).lower():
                raise ExtractionError(
                    f"out of memory during capture: {exc}; reduce the sequence length"
                ) from exc
            raise
    finally:
        for handle in handles:
            handle.remove()

    for acc in accumulators:
        if acc.samples == 0:
            raise ExtractionError(
                f"layer {acc.name!r} saw no activations; is it on the forward path?"
            )

    scores = [
        score_from_gram(
            acc.weight,
            acc.gram,
            damping_factor=damping_factor,
            damping_absolute=damping_absolute,
        )
        for acc in accumulators
    ]
    bits_per_layer = [
        (acc.layer_id, _median_threshold_bits(score))
        for acc, score in zip(accumulators, scores)
    ]
    payload = encode_vector(
        bits_per_layer,
        language=job.language,
        model=job.model_id,
        corpus=job.corpus_id,
    )
    Path(job.output_path).parent.mkdir(parents=True, exist_ok=True)
    Path(job.output_path).write_bytes(payload)

    if dump_wx_layer is not None:
        if dump_wx_path is None:
            raise ExtractionError("dump_wx_layer requires dump_wx_path")
        acc = accumulators[dump_wx_layer]
        stacked = np.concatenate(acc.captured, axis=0)
        np.savez_compressed(
            dump_wx_path,
            **{
                f"W_{acc.layer_id:08d}": acc.weight,
                f"X_{acc.layer_id:08d}": stacked,
            },
        )

    return CaptureResult(
        layer_names=[acc.name for acc in accumulators],
        scores=scores,
        bits_per_layer=bits_per_layer,
        payload=payload,
    )
