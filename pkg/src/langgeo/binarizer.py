"""Median thresholding of importance scores into packed per-language bit vectors.

Each layer is thresholded at the median of its own scores (scores are not
comparable across layers), flattened row-major, and the per-layer bit blocks
are concatenated in layer order into one bit-packed vector per
(language, model, corpus) triple. Bits are packed least-significant-bit first
within each byte; this packing is part of the wire format and is bit-exact.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import ValidationError
from .importance import ImportanceMatrix

__all__ = [
    "BitBlock",
    "BinaryLanguageVector",
    "binarize_layer",
    "assemble_vector",
    "disassemble_vector",
    "pack_bits",
    "unpack_bits",
]


def pack_bits(bits: np.ndarray) -> bytes:
    """Pack a 0/1 array into bytes, LSB first; pad bits are zero."""
    return np.packbits(np.asarray(bits, dtype=np.uint8), bitorder="little").tobytes()


def unpack_bits(packed: bytes, n_bits: int) -> np.ndarray:
    """Inverse of pack_bits; returns a uint8 array of 0/1 of length n_bits."""
    raw = np.frombuffer(packed, dtype=np.uint8)
    return np.unpackbits(raw, bitorder="little")[:n_bits]


@dataclass(frozen=True)
class BitBlock:
    """Unpacked indicator bits for one layer."""

    layer_id: int
    bits: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.bits, dtype=np.uint8).ravel()
        if arr.size == 0:
            raise ValidationError(f"layer {self.layer_id}: empty bit block")
        if np.any(arr > 1):
            raise ValidationError(f"layer {self.layer_id}: bits must be 0 or 1")
        object.__setattr__(self, "bits", arr)

    def __len__(self) -> int:
        return int(self.bits.size)


@dataclass(frozen=True)
class BinaryLanguageVector:
    """Bit-packed importance indicators for one (language, model, corpus) triple.

    `layer_offsets` lists (layer_id, start_bit, bit_length) for each contiguous
    per-layer block, ordered by layer_id.
    """

    packed: bytes
    n_bits: int
    language_tag: str
    model_tag: str
    corpus_tag: str
    layer_offsets: tuple[tuple[int, int, int], ...]

    def __post_init__(self):
        object.__setattr__(self, "packed", bytes(self.packed))
        offsets = tuple((int(a), int(b), int(c)) for a, b, c in self.layer_offsets)
        object.__setattr__(self, "layer_offsets", offsets)
        if self.n_bits < 1:
            raise ValidationError("vector must contain at least one bit")
        if not offsets:
            raise ValidationError("vector must declare at least one layer")
        cursor = 0
        prev_id = None
        for layer_id, start, length in offsets:
            if prev_id is not None and layer_id <= prev_id:
                raise ValidationError(
                    f"layer ids must be strictly increasing, got {layer_id} after {prev_id}"
                )
            if start != cursor:
                raise ValidationError(
                    f"layer {layer_id}: block starts at {start}, expected {cursor}"
                )
            if length < 1:
                raise ValidationError(f"layer {layer_id}: empty block")
            cursor += length
            prev_id = layer_id
        if cursor != self.n_bits:
            raise ValidationError(
                f"layer blocks cover {cursor} bits but vector declares {self.n_bits}"
            )
        if len(self.packed) != (self.n_bits + 7) // 8:
            raise ValidationError(
                f"payload is {len(self.packed)} bytes, expected {(self.n_bits + 7) // 8}"
            )
        # padding bits past n_bits must be zero or packed comparisons would lie
        pad = len(self.packed) * 8 - self.n_bits
        if pad and (self.packed[-1] >> (8 - pad)):
            raise ValidationError("padding bits beyond n_bits must be zero")

    @property
    def layout(self) -> tuple[int, tuple[tuple[int, int, int], ...]]:
        return (self.n_bits, self.layer_offsets)

    def bits(self) -> np.ndarray:
        return unpack_bits(self.packed, self.n_bits)

    def popcount(self) -> int:
        raw = np.frombuffer(self.packed, dtype=np.uint8)
        return int(np.bitwise_count(raw).sum())


def binarize_layer(scores: ImportanceMatrix | np.ndarray, layer_id: int | None = None) -> BitBlock:
    """Indicator bits for scores strictly above the layer median, row-major.

    The median is the interpolated median over all entries of the layer;
    entries equal to the median become 0.
    """
    if isinstance(scores, ImportanceMatrix):
        data, lid = scores.data, scores.layer_id
    else:
        data = np.asarray(scores, dtype=np.float64)
        lid = 0
    if layer_id is not None:
        lid = layer_id
    if data.size == 0:
        raise ValidationError("cannot binarize an empty score matrix")
    if not np.all(np.isfinite(data)):
        raise ValidationError("scores contain non-finite entries")
    flat = data.ravel(order="C")
    median = np.median(flat)
    return BitBlock(layer_id=lid, bits=(flat > median).astype(np.uint8))


def assemble_vector(
    blocks: Sequence[BitBlock],
    language_tag: str,
    model_tag: str = "",
    corpus_tag: str = "",
) -> BinaryLanguageVector:
    """Concatenate per-layer blocks (ordered by layer_id) into one packed vector."""
    if not blocks:
        raise ValidationError("need at least one bit block")
    ids = [b.layer_id for b in blocks]
    if len(set(ids)) != len(ids):
        raise ValidationError(f"duplicate layer ids in {ids}")
    if ids != sorted(ids):
        raise ValidationError(f"blocks must be ordered by layer_id, got {ids}")
    offsets = []
    cursor = 0
    for block in blocks:
        offsets.append((block.layer_id, cursor, len(block)))
        cursor += len(block)
    bits = np.concatenate([b.bits for b in blocks])
    return BinaryLanguageVector(
        packed=pack_bits(bits),
        n_bits=cursor,
        language_tag=language_tag,
        model_tag=model_tag,
        corpus_tag=corpus_tag,
        layer_offsets=tuple(offsets),
    )


def disassemble_vector(vector: BinaryLanguageVector) -> list[BitBlock]:
    """Recover the per-layer bit blocks from an assembled vector."""
    bits = vector.bits()
    return [
        BitBlock(layer_id=layer_id, bits=bits[start : start + length])
        for layer_id, start, length in vector.layer_offsets
    ]
