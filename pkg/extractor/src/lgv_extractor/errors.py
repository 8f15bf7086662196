class ExtractionError(Exception):
    """Base class for extraction failures."""


class CorpusError(ExtractionError):
    """The corpus cannot supply the requested language."""


class BudgetError(ExtractionError):
    """The token budget is invalid or cannot be met."""
