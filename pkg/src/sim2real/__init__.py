"""Sim-to-real domain adaptation: plain and gradient-reversal classifiers
with a weighted Kolmogorov-Smirnov agreement gate."""

from sim2real.errors import (
    ConfigError,
    ContractError,
    InsufficientDataError,
    NumericError,
    ParseError,
    SchemaError,
    ShapeError,
    Sim2RealError,
    ValidationError,
)

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "ContractError",
    "InsufficientDataError",
    "NumericError",
    "ParseError",
    "SchemaError",
    "ShapeError",
    "Sim2RealError",
    "ValidationError",
]
