"""Regression-forest toolkit for daily electricity-price driver analysis."""

__version__ = "0.1.0"

from .errors import (
    ConfigError,
    DataError,
    EpexForestError,
    InsufficientDataError,
    IntegrityError,
    NumericalError,
    ParseError,
    RankError,
    SchemaError,
)

__all__ = [
    "__version__",
    "ConfigError",
    "DataError",
    "EpexForestError",
    "InsufficientDataError",
    "IntegrityError",
    "NumericalError",
    "ParseError",
    "RankError",
    "SchemaError",
]
