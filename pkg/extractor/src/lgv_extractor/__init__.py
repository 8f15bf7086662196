"""Weight-importance vector extraction from causal language models.

Samples per-language calibration text, captures the inputs of every targeted
linear sub-layer while the model runs, accumulates per-layer activation Gram
matrices, scores weights, thresholds the scores at each layer's median, and
serializes the resulting bits as a `.lgv` vector file.
"""

__version__ = "0.1.0"

from .job import ExtractionJob
from .errors import BudgetError, CorpusError, ExtractionError

__all__ = [
    "__version__",
    "ExtractionJob",
    "ExtractionError",
    "CorpusError",
    "BudgetError",
]
