"""Exception hierarchy shared across the package.

Exit-code mapping in the CLI: ValidationError/ParseError -> 2 (data),
OSError -> 3 (I/O), ProtocolError/DetectorTimeout -> 4 (protocol).
"""


class FridgeVisionError(Exception):
    """Base class for all package errors."""


class ValidationError(FridgeVisionError):
    """Input data violates a documented invariant (bad box, bad config, ...)."""


class ParseError(FridgeVisionError):
    """Input could not be parsed at all (wrong column count, bad number, ...)."""

    def __init__(self, message: str, line: int | None = None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class ProtocolError(FridgeVisionError):
    """Remote detector sent a malformed or mismatched response. Not retryable."""


class DetectorTimeout(FridgeVisionError):
    """Remote detector did not answer within the deadline. Retryable."""
