"""Cross-lingual alignment of averaged contextual token embeddings."""

__version__ = "0.1.0"

from .embed_io import AnchorTable, TokenRecord, TokenStreamReader, Vocab
from .errors import (
    AmbiguityError,
    ConfigError,
    DataError,
    EvalError,
    FormatError,
    IneligibleError,
    RefinementError,
    SpecError,
    TrainingDivergedError,
    TruncationError,
    XanchorError,
)

__all__ = [
    "AnchorTable",
    "TokenRecord",
    "TokenStreamReader",
    "Vocab",
    "XanchorError",
    "FormatError",
    "TruncationError",
    "DataError",
    "IneligibleError",
    "AmbiguityError",
    "TrainingDivergedError",
    "RefinementError",
    "EvalError",
    "SpecError",
    "ConfigError",
    "__version__",
]
