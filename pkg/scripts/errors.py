"""
Error types shared by every package.

Validation problems (bad input, bad config) map to exit code 1 in the CLI,
everything else that escapes a mode maps to exit code 2.
"""

from typing import Optional

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_RUNTIME = 2


class SparseCellError(Exception):
    """Root of all project errors."""


class ValidationError(SparseCellError, ValueError):
    """Input or configuration violates an invariant."""


class ParseError(ValidationError):
    """Malformed line in an input file."""

    def __init__(self, message: str, line_number: Optional[int] = None):
        self.line_number = line_number
        if line_number is not None:
            message = f"line {line_number}: {message}"
        super().__init__(message)


class EmptyResultError(ValidationError):
    """An operation filtered away everything it was given."""


class DegenerateMaskError(ValidationError):
    """A mask plan with nothing to predict."""


class ConfigError(ValidationError):
    """Missing or invalid configuration key."""

    def __init__(self, key: str, message: Optional[str] = None):
        self.key = key
        super().__init__(message or f"Missing required config key: '{key}'")


class NumericFailureError(SparseCellError, RuntimeError):
    """NaN or Inf produced inside the network."""

    def __init__(self, stage: str, layer: Optional[int] = None):
        self.stage = stage
        self.layer = layer
        where = f"{stage} layer {layer}" if layer is not None else stage
        super().__init__(f"Non-finite values detected in {where}")


def exit_code_for(error: BaseException) -> int:
    """Maps an exception to the CLI exit code."""
    if isinstance(error, ValidationError):
        return EXIT_VALIDATION
    return EXIT_RUNTIME
