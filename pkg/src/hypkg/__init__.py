"""Hyperbolic knowledge-graph embeddings with Givens isometries and attention."""

from hypkg.errors import CheckpointError, DomainError, NumericError, ParseError

__version__ = "0.1.0"

__all__ = ["CheckpointError", "DomainError", "NumericError", "ParseError", "__version__"]
