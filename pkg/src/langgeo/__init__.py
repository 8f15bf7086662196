"""Language geometry toolkit.

Computes per-weight importance scores from layer weights and calibration
activations, binarizes them into per-language bit vectors, builds Hamming
distance matrices, averages them across runs, embeds the result with
classical MDS, and analyzes the embedding with k-means metrics and
minimum-spanning-tree layouts.
"""

__version__ = "0.1.0"

from .errors import (
    CoverageError,
    FormatError,
    LangGeoError,
    NumericError,
    ValidationError,
)

__all__ = [
    "__version__",
    "LangGeoError",
    "ValidationError",
    "FormatError",
    "CoverageError",
    "NumericError",
]
