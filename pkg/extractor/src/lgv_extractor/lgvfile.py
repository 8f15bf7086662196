"""Writer for the `.lgv` binary vector format.

Layout (little-endian; `str` = u16 byte length + UTF-8 bytes):
  magic "LGV1" | u32 version=1 | str language | str model | str corpus
  | u32 layer_count | layer_count * { u64 layer_id, u64 bit_length }
  | u64 n_bits | ceil(n_bits/8) payload bytes packed LSB-first
  | u64 FNV-1a checksum over everything before it
"""

from __future__ import annotations

import struct
from pathlib import Path
from typing import Sequence

import numpy as np

MAGIC = b"LGV1"
VERSION = 1


def fnv1a64(data: bytes) -> int:
    value = 0xCBF29CE484222325
    for byte in data:
        value = ((value ^ byte) * 0x100000001B3) & 0xFFFFFFFFFFFFFFFF
    return value


def _string(text: str) -> bytes:
    raw = text.encode("utf-8")
    return struct.pack("<H", len(raw)) + raw


def encode_vector(
    bits_per_layer: Sequence[tuple[int, np.ndarray]],
    language: str,
    model: str,
    corpus: str,
) -> bytes:
    """Serialize (layer_id, bit array) pairs, ordered as given."""
    parts = [MAGIC, struct.pack("<I", VERSION)]
    parts.append(_string(language))
    parts.append(_string(model))
    parts.append(_string(corpus))
    parts.append(struct.pack("<I", len(bits_per_layer)))
    total = 0
    for layer_id, bits in bits_per_layer:
        parts.append(struct.pack("<QQ", layer_id, bits.size))
        total += int(bits.size)
    parts.append(struct.pack("<Q", total))
    all_bits = np.concatenate([np.asarray(b, dtype=np.uint8) for _, b in bits_per_layer])
    parts.append(np.packbits(all_bits, bitorder="little").tobytes())
    body = b"".join(parts)
    return body + struct.pack("<Q", fnv1a64(body))


def write_vector_file(
    path: str | Path,
    bits_per_layer: Sequence[tuple[int, np.ndarray]],
    language: str,
    model: str,
    corpus: str,
) -> None:
    Path(path).write_bytes(encode_vector(bits_per_layer, language, model, corpus))
