"""Planted-family binary vectors for end-to-end testing without any model.

Family prototypes are drawn by flipping a shared random root with rate
p_proto; each member language flips its prototype with rate p_member. The
prototypes depend only on the spec seed, so several "runs" (simulated
model/corpus combinations) observe the same underlying languages with
independent member noise.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .binarizer import BinaryLanguageVector, pack_bits
from .clustering import LabeledPartition
from .errors import ValidationError

__all__ = ["SyntheticSpec", "synth_generate", "ground_truth"]


@dataclass(frozen=True)
class SyntheticSpec:
    """Parameters of the planted-family generator."""

    families: int
    members_per_family: int
    n_bits: int = 65536
    p_proto: float = 0.25
    p_member: float = 0.02
    seed: int = 0

    def __post_init__(self):
        if self.families < 1 or self.members_per_family < 1:
            raise ValidationError("need at least one family and one member")
        if self.n_bits < 64:
            raise ValidationError("vector length must be at least 64 bits")
        if not 0 <= self.p_member < self.p_proto <= 0.5:
            raise ValidationError(
                "flip rates must satisfy 0 <= p_member < p_proto <= 0.5"
            )

    @property
    def n_languages(self) -> int:
        return self.families * self.members_per_family

    def language_tag(self, family: int, member: int) -> str:
        return f"f{family:02d}m{member:02d}"


def _prototypes(spec: SyntheticSpec) -> np.ndarray:
    rng = np.random.default_rng([spec.seed, 0])
    root = rng.random(spec.n_bits) < 0.5
    flips = rng.random((spec.families, spec.n_bits)) < spec.p_proto
    return root[np.newaxis, :] ^ flips


def ground_truth(spec: SyntheticSpec) -> LabeledPartition:
    """The planted family partition the pipeline should recover."""
    assignment = {
        spec.language_tag(f, m): f
        for f in range(spec.families)
        for m in range(spec.members_per_family)
    }
    names = tuple(f"family_{f}" for f in range(spec.families))
    return LabeledPartition(assignment, names)


def synth_generate(
    spec: SyntheticSpec,
    model_tag: str = "synth",
    corpus_tag: str = "synth",
    run: int = 0,
) -> tuple[list[BinaryLanguageVector], LabeledPartition]:
    """One simulated run: a vector per language plus the true partition.

    Different `run` values share prototypes but draw fresh member noise,
    mimicking independent (model, corpus) observations of the same languages.
    """
    if run < 0:
        raise ValidationError("run index must be >= 0")
    protos = _prototypes(spec)
    rng = np.random.default_rng([spec.seed, 1 + run])
    vectors = []
    for f in range(spec.families):
        flips = rng.random((spec.members_per_family, spec.n_bits)) < spec.p_member
        members = protos[f][np.newaxis, :] ^ flips
        for m in range(spec.members_per_family):
            vectors.append(
                BinaryLanguageVector(
                    packed=pack_bits(members[m].astype(np.uint8)),
                    n_bits=spec.n_bits,
                    language_tag=spec.language_tag(f, m),
                    model_tag=model_tag,
                    corpus_tag=corpus_tag,
                    layer_offsets=((0, 0, spec.n_bits),),
                )
            )
    return vectors, ground_truth(spec)
