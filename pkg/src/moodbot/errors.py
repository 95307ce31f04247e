"""Exception types shared across the package."""


class MoodbotError(Exception):
    """Base class for every error raised by this package."""


class InvalidInputError(MoodbotError, ValueError):
    """An operation received input that violates its contract."""


class ConfigurationError(MoodbotError, ValueError):
    """Shapes, sizes, or settings are mutually inconsistent."""


class ParseError(MoodbotError, ValueError):
    """A data file is malformed.  Carries the 1-based offending line."""

    def __init__(self, message: str, line: int | None = None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class NumericOverflowError(MoodbotError, ArithmeticError):
    """A loss or gradient became non-finite.  Names the offending tensor."""

    def __init__(self, message: str, tensor: str | None = None):
        if tensor is not None:
            message = f"{message} (tensor: {tensor})"
        super().__init__(message)
        self.tensor = tensor
