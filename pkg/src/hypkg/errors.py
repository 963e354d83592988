"""Exception types shared across the package."""


class DomainError(ValueError):
    """Input outside the domain of an operation (bad shape, id, or point)."""


class NumericError(ArithmeticError):
    """A computation produced a non-finite value."""

    def __init__(self, message, triple=None):
        super().__init__(message)
        self.triple = triple


class ParseError(ValueError):
    """Malformed line in a triple file."""

    def __init__(self, path, lineno, message):
        super().__init__(f"{path}:{lineno}: {message}")
        self.path = path
        self.lineno = lineno


class CheckpointError(IOError):
    """Checkpoint is corrupt, truncated, or does not match the dataset."""
