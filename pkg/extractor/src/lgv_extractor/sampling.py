"""Per-language calibration sampling.

Documents are shuffled with the job seed, tokenized, concatenated, and cut
into fixed-length sequences until the token budget is met exactly. A corpus
is anything with `documents(language) -> sequence of strings`; a tokenizer is
any callable mapping text to a list of token ids.
"""

from __future__ import annotations

import hashlib
from pathlib import Path
from typing import Callable, Protocol, Sequence

import numpy as np

from .errors import BudgetError, CorpusError
from .job import ExtractionJob

Tokenizer = Callable[[str], Sequence[int]]


class Corpus(Protocol):
    def languages(self) -> Sequence[str]: ...

    def documents(self, language: str) -> Sequence[str]: ...


class DictCorpus:
    """In-memory corpus: language tag -> list of document strings."""

    def __init__(self, table: dict[str, list[str]]):
        self._table = dict(table)

    def languages(self):
        return sorted(self._table)

    def documents(self, language: str):
        if language not in self._table:
            raise CorpusError(f"corpus has no language {language!r}")
        return list(self._table[language])


class DirectoryCorpus:
    """Directory of <language>.txt files, one document per line."""

    def __init__(self, root: str | Path):
        self.root = Path(root)
        if not self.root.is_dir():
            raise CorpusError(f"corpus directory {self.root} does not exist")

    def languages(self):
        return sorted(p.stem for p in self.root.glob("*.txt"))

    def documents(self, language: str):
        path = self.root / f"{language}.txt"
        if not path.exists():
            raise CorpusError(f"corpus has no language {language!r} ({path} missing)")
        return [line for line in path.read_text().splitlines() if line.strip()]


def byte_tokenizer(text: str) -> list[int]:
    """UTF-8 byte ids; the no-dependency fallback tokenizer."""
    return list(text.encode("utf-8"))


def sample_calibration(
    job: ExtractionJob, corpus: Corpus, tokenizer: Tokenizer
) -> np.ndarray:
    """Exactly `token_budget` tokens as an (n_sequences, sequence_length) array.

    Deterministic for a given job seed: documents are shuffled with the seed,
    tokenized in that order, and the concatenated stream is truncated to the
    budget.
    """
    documents = list(corpus.documents(job.language))
    if not documents:
        raise CorpusError(f"corpus has no documents for language {job.language!r}")
    order = np.random.default_rng(job.seed).permutation(len(documents))

    tokens: list[int] = []
    for index in order:
        tokens.extend(tokenizer(documents[int(index)]))
        if len(tokens) >= job.token_budget:
            break
    if len(tokens) < job.token_budget:
        raise BudgetError(
            f"corpus supplies only {len(tokens)} tokens for {job.language!r}, "
            f"budget is {job.token_budget}"
        )
    stream = np.asarray(tokens[: job.token_budget], dtype=np.int64)
    return stream.reshape(job.n_sequences, job.sequence_length)


def batch_digest(batches: np.ndarray) -> str:
    """Stable fingerprint of a token stream, for determinism checks."""
    return hashlib.sha256(np.ascontiguousarray(batches, dtype=np.int64).tobytes()).hexdigest()
