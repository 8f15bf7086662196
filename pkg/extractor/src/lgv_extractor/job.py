from __future__ import annotations

from dataclasses import dataclass

from .errors import BudgetError

DEFAULT_TOKEN_BUDGET = 2**19  # 524,288 calibration tokens per language


@dataclass(frozen=True)
class ExtractionJob:
    """One (model, corpus, language) extraction task.

    The token budget must be met exactly; jobs fail rather than silently
    producing short samples. The budget must divide into whole fixed-length
    sequences.
    """

    model_id: str
    corpus_id: str
    language: str
    output_path: str
    token_budget: int = DEFAULT_TOKEN_BUDGET
    sequence_length: int = 2048
    batch_size: int = 8
    seed: int = 0

    def __post_init__(self):
        if self.token_budget <= 0:
            raise BudgetError(f"token budget must be positive, got {self.token_budget}")
        if self.sequence_length <= 0:
            raise BudgetError(
                f"sequence length must be positive, got {self.sequence_length}"
            )
        if self.token_budget % self.sequence_length:
            raise BudgetError(
                f"token budget {self.token_budget} is not a whole number of "
                f"{self.sequence_length}-token sequences"
            )
        if self.batch_size <= 0:
            raise BudgetError(f"batch size must be positive, got {self.batch_size}")

    @property
    def n_sequences(self) -> int:
        return self.token_budget // self.sequence_length
