"""On-disk artifact codecs.

Binary layouts (all integers little-endian; `str` below means a u16 byte
length followed by that many UTF-8 bytes):

  .lgv  magic "LGV1" | u32 version | str language | str model | str corpus
        | u32 layer_count | layer_count * { u64 layer_id, u64 bit_length }
        | u64 n_bits | ceil(n_bits/8) payload bytes (LSB-first)
        | u64 FNV-1a checksum over everything before it

  .lgd  magic "LGD1" | u32 version | u32 n | n * str labels
        | n*n f64 row-major values | ceil(n*n/8) mask bytes (row-major,
        LSB-first) | u64 FNV-1a checksum over everything before it

Embeddings and partitions are plain CSV; the embedding's spectrum lives in a
sidecar JSON. Layer dumps (weights plus calibration activations) travel in
NumPy .npz containers under W_<layer_id>/X_<layer_id>/S_<layer_id> keys.
"""

from __future__ import annotations

import csv
import io
import json
import struct
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .binarizer import BinaryLanguageVector, pack_bits, unpack_bits
from .errors import FormatError, ValidationError
from .importance import ImportanceMatrix
from .mds import Embedding
from .metricspace import MaskedDistanceMatrix

__all__ = [
    "FORMAT_VERSION",
    "LGV_MAGIC",
    "LGD_MAGIC",
    "fnv1a64",
    "vector_to_bytes",
    "vector_from_bytes",
    "write_vector",
    "read_vector",
    "matrix_to_bytes",
    "matrix_from_bytes",
    "write_matrix",
    "read_matrix",
    "write_matrix_csv",
    "write_embedding_csv",
    "read_embedding_csv",
    "write_embedding_spectrum",
    "write_partition_csv",
    "read_partition_csv",
    "save_layer_dumps",
    "load_layer_dumps",
    "save_scores",
    "load_scores",
]

FORMAT_VERSION = 1
LGV_MAGIC = b"LGV1"
LGD_MAGIC = b"LGD1"

_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3
_U64_MASK = 0xFFFFFFFFFFFFFFFF


def fnv1a64(data: bytes) -> int:
    """64-bit FNV-1a hash."""
    value = _FNV_OFFSET
    for byte in data:
        value = ((value ^ byte) * _FNV_PRIME) & _U64_MASK
    return value


def _pack_str(text: str) -> bytes:
    raw = text.encode("utf-8")
    if len(raw) > 0xFFFF:
        raise ValidationError(f"string too long to serialize ({len(raw)} bytes)")
    return struct.pack("<H", len(raw)) + raw


class _Reader:
    """Cursor over a byte buffer that reports truncation with positions."""

    def __init__(self, data: bytes, what: str):
        self.data = data
        self.pos = 0
        self.what = what

    def take(self, n: int, field: str) -> bytes:
        if self.pos + n > len(self.data):
            raise FormatError(
                f"truncated {self.what}: {field} at byte {self.pos} needs {n} bytes, "
                f"only {len(self.data) - self.pos} remain"
            )
        chunk = self.data[self.pos : self.pos + n]
        self.pos += n
        return chunk

    def u16(self, field: str) -> int:
        return struct.unpack("<H", self.take(2, field))[0]

    def u32(self, field: str) -> int:
        return struct.unpack("<I", self.take(4, field))[0]

    def u64(self, field: str) -> int:
        return struct.unpack("<Q", self.take(8, field))[0]

    def string(self, field: str) -> str:
        length = self.u16(f"{field} length")
        raw = self.take(length, field)
        try:
            return raw.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise FormatError(f"bad UTF-8 in {field} at byte {self.pos}: {exc}") from exc

    def expect_end(self) -> None:
        if self.pos != len(self.data):
            raise FormatError(
                f"{self.what} has {len(self.data) - self.pos} trailing bytes "
                f"after byte {self.pos}"
            )


def _check_magic_version(reader: _Reader, magic: bytes) -> None:
    got = reader.take(len(magic), "magic")
    if got != magic:
        raise FormatError(f"bad magic {got!r} in {reader.what}, expected {magic!r}")
    version = reader.u32("version")
    if version != FORMAT_VERSION:
        raise FormatError(
            f"unsupported {reader.what} version {version}, expected {FORMAT_VERSION}"
        )


def _verify_checksum(data: bytes, what: str) -> bytes:
    if len(data) < 8:
        raise FormatError(f"{what} shorter than its checksum field")
    body, trailer = data[:-8], data[-8:]
    expected = struct.unpack("<Q", trailer)[0]
    actual = fnv1a64(body)
    if actual != expected:
        raise FormatError(
            f"{what} checksum mismatch: stored {expected:#018x}, computed {actual:#018x}"
        )
    return body


# -- .lgv vector files --------------------------------------------------------

def vector_to_bytes(vector: BinaryLanguageVector) -> bytes:
    out = io.BytesIO()
    out.write(LGV_MAGIC)
    out.write(struct.pack("<I", FORMAT_VERSION))
    out.write(_pack_str(vector.language_tag))
    out.write(_pack_str(vector.model_tag))
    out.write(_pack_str(vector.corpus_tag))
    out.write(struct.pack("<I", len(vector.layer_offsets)))
    for layer_id, _, bit_length in vector.layer_offsets:
        out.write(struct.pack("<QQ", layer_id, bit_length))
    out.write(struct.pack("<Q", vector.n_bits))
    out.write(vector.packed)
    body = out.getvalue()
    return body + struct.pack("<Q", fnv1a64(body))


def vector_from_bytes(data: bytes, what: str = "vector file") -> BinaryLanguageVector:
    body = _verify_checksum(data, what)
    reader = _Reader(body, what)
    _check_magic_version(reader, LGV_MAGIC)
    language = reader.string("language tag")
    model = reader.string("model tag")
    corpus = reader.string("corpus tag")
    layer_count = reader.u32("layer count")
    offsets = []
    cursor = 0
    for _ in range(layer_count):
        layer_id = reader.u64("layer id")
        bit_length = reader.u64("layer bit length")
        offsets.append((layer_id, cursor, bit_length))
        cursor += bit_length
    n_bits = reader.u64("total bit length")
    if n_bits != cursor:
        raise FormatError(
            f"{what} declares {n_bits} bits but layers cover {cursor}"
        )
    payload = reader.take((n_bits + 7) // 8, "payload")
    reader.expect_end()
    try:
        return BinaryLanguageVector(
            packed=payload,
            n_bits=n_bits,
            language_tag=language,
            model_tag=model,
            corpus_tag=corpus,
            layer_offsets=tuple(offsets),
        )
    except ValidationError as exc:
        raise FormatError(f"{what} holds an invalid vector: {exc}") from exc


def write_vector(path: str | Path, vector: BinaryLanguageVector) -> None:
    Path(path).write_bytes(vector_to_bytes(vector))


def read_vector(path: str | Path) -> BinaryLanguageVector:
    path = Path(path)
    return vector_from_bytes(path.read_bytes(), what=f"vector file {path.name}")


# -- .lgd distance matrix files ------------------------------------------------

def matrix_to_bytes(matrix: MaskedDistanceMatrix) -> bytes:
    out = io.BytesIO()
    out.write(LGD_MAGIC)
    out.write(struct.pack("<I", FORMAT_VERSION))
    out.write(struct.pack("<I", matrix.n))
    for label in matrix.labels:
        out.write(_pack_str(label))
    out.write(matrix.values.astype("<f8").tobytes(order="C"))
    out.write(pack_bits(matrix.observed.ravel(order="C").astype(np.uint8)))
    body = out.getvalue()
    return body + struct.pack("<Q", fnv1a64(body))


def matrix_from_bytes(data: bytes, what: str = "matrix file") -> MaskedDistanceMatrix:
    body = _verify_checksum(data, what)
    reader = _Reader(body, what)
    _check_magic_version(reader, LGD_MAGIC)
    n = reader.u32("matrix size")
    labels = tuple(reader.string(f"label {i}") for i in range(n))
    raw = reader.take(8 * n * n, "matrix values")
    values = np.frombuffer(raw, dtype="<f8").reshape(n, n).astype(np.float64)
    mask_raw = reader.take((n * n + 7) // 8, "observed mask")
    observed = unpack_bits(mask_raw, n * n).reshape(n, n).astype(bool)
    reader.expect_end()
    try:
        return MaskedDistanceMatrix(values=values, observed=observed, labels=labels)
    except ValidationError as exc:
        raise FormatError(f"{what} holds an invalid matrix: {exc}") from exc


def write_matrix(path: str | Path, matrix: MaskedDistanceMatrix) -> None:
    Path(path).write_bytes(matrix_to_bytes(matrix))


def read_matrix(path: str | Path) -> MaskedDistanceMatrix:
    path = Path(path)
    return matrix_from_bytes(path.read_bytes(), what=f"matrix file {path.name}")


def write_matrix_csv(path: str | Path, matrix: MaskedDistanceMatrix) -> None:
    """Human-diffable mirror of the .lgd content; unobserved cells stay empty."""
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["language", *matrix.labels])
        for i, label in enumerate(matrix.labels):
            row = [label]
            for j in range(matrix.n):
                row.append(
                    repr(float(matrix.values[i, j])) if matrix.observed[i, j] else ""
                )
            writer.writerow(row)


# -- embeddings and partitions (CSV) -------------------------------------------

def write_embedding_csv(path: str | Path, emb: Embedding) -> None:
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["language", *(f"y_{j + 1}" for j in range(emb.dim))])
        for label, row in zip(emb.labels, emb.coordinates):
            writer.writerow([label, *(repr(float(v)) for v in row)])


def read_embedding_csv(path: str | Path) -> Embedding:
    path = Path(path)
    with open(path, newline="") as handle:
        rows = list(csv.reader(handle))
    if not rows or not rows[0] or rows[0][0] != "language":
        raise FormatError(f"embedding file {path.name}: missing header row")
    labels = []
    coords = []
    width = len(rows[0]) - 1
    for lineno, row in enumerate(rows[1:], start=2):
        if len(row) != width + 1:
            raise FormatError(
                f"embedding file {path.name}: line {lineno} has {len(row)} fields, "
                f"expected {width + 1}"
            )
        labels.append(row[0])
        try:
            coords.append([float(v) for v in row[1:]])
        except ValueError as exc:
            raise FormatError(
                f"embedding file {path.name}: line {lineno}: {exc}"
            ) from exc
    if not labels:
        raise FormatError(f"embedding file {path.name}: no data rows")
    return Embedding(coordinates=np.array(coords), labels=tuple(labels))


def write_embedding_spectrum(path: str | Path, emb: Embedding) -> None:
    if emb.eigenvalues is None or emb.dropped_spectrum is None or emb.epsilon is None:
        raise ValidationError("embedding carries no spectrum to serialize")
    document = {
        "epsilon": emb.epsilon,
        "eigenvalues": [float(v) for v in emb.eigenvalues],
        "dropped_spectrum": [float(v) for v in emb.dropped_spectrum],
    }
    Path(path).write_text(json.dumps(document, indent=2, sort_keys=True) + "\n")


def write_partition_csv(path: str | Path, partition) -> None:
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["language", "label"])
        for tag in sorted(partition.assignment):
            writer.writerow([tag, partition.label_names[partition.assignment[tag]]])


def read_partition_csv(path: str | Path):
    from .clustering import LabeledPartition

    path = Path(path)
    with open(path, newline="") as handle:
        rows = list(csv.reader(handle))
    if not rows or rows[0][:2] != ["language", "label"]:
        raise FormatError(f"partition file {path.name}: missing header row")
    named = {}
    for lineno, row in enumerate(rows[1:], start=2):
        if len(row) != 2:
            raise FormatError(
                f"partition file {path.name}: line {lineno} has {len(row)} fields, expected 2"
            )
        if row[0] in named:
            raise FormatError(
                f"partition file {path.name}: line {lineno}: duplicate language {row[0]!r}"
            )
        named[row[0]] = row[1]
    if not named:
        raise FormatError(f"partition file {path.name}: no data rows")
    return LabeledPartition.from_names(named)


# -- tensor containers (.npz) ---------------------------------------------------

def save_layer_dumps(
    path: str | Path, layers: Mapping[int, tuple[np.ndarray, np.ndarray]]
) -> None:
    """Store per-layer (weights, calibration) pairs keyed by layer id."""
    arrays = {}
    for layer_id, (weights, calibration) in layers.items():
        arrays[f"W_{int(layer_id):08d}"] = np.asarray(weights, dtype=np.float64)
        arrays[f"X_{int(layer_id):08d}"] = np.asarray(calibration, dtype=np.float64)
    np.savez_compressed(path, **arrays)


def load_layer_dumps(path: str | Path) -> dict[int, tuple[np.ndarray, np.ndarray]]:
    path = Path(path)
    try:
        with np.load(path) as bundle:
            arrays = dict(bundle)
    except (OSError, ValueError) as exc:
        raise FormatError(f"cannot read tensor container {path.name}: {exc}") from exc
    layers: dict[int, tuple[np.ndarray, np.ndarray]] = {}
    weight_ids = {int(k[2:]) for k in arrays if k.startswith("W_")}
    calib_ids = {int(k[2:]) for k in arrays if k.startswith("X_")}
    if weight_ids != calib_ids:
        raise FormatError(
            f"tensor container {path.name}: weight layers {sorted(weight_ids)} "
            f"do not match calibration layers {sorted(calib_ids)}"
        )
    if not weight_ids:
        raise FormatError(f"tensor container {path.name}: no layer dumps found")
    for layer_id in sorted(weight_ids):
        layers[layer_id] = (
            arrays[f"W_{layer_id:08d}"],
            arrays[f"X_{layer_id:08d}"],
        )
    return layers


def save_scores(path: str | Path, scores: Sequence[ImportanceMatrix]) -> None:
    ids = [s.layer_id for s in scores]
    if len(set(ids)) != len(ids):
        raise ValidationError(f"duplicate layer ids in scores: {ids}")
    arrays = {f"S_{s.layer_id:08d}": s.data for s in scores}
    np.savez_compressed(path, **arrays)


def load_scores(path: str | Path) -> list[ImportanceMatrix]:
    path = Path(path)
    try:
        with np.load(path) as bundle:
            arrays = dict(bundle)
    except (OSError, ValueError) as exc:
        raise FormatError(f"cannot read score container {path.name}: {exc}") from exc
    ids = sorted(int(k[2:]) for k in arrays if k.startswith("S_"))
    if not ids:
        raise FormatError(f"score container {path.name}: no score matrices found")
    return [ImportanceMatrix(arrays[f"S_{i:08d}"], layer_id=i) for i in ids]
