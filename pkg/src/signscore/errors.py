"""Exception taxonomy shared by every module.

The CLI maps these onto process exit codes: validation errors exit 2,
parse errors exit 3, training divergence exits 4.
"""


class SignscoreError(Exception):
    """Base class for all errors raised by this package."""

    exit_code = 1


class ValidationError(SignscoreError):
    """An invariant or precondition was violated by otherwise readable data."""

    exit_code = 2


class ParseError(SignscoreError):
    """Input bytes could not be decoded into records at all."""

    exit_code = 3

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class TrainingDivergence(SignscoreError):
    """A training loss became non-finite; the run was aborted."""

    exit_code = 4
