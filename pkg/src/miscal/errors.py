"""Exception types shared across the package.

The CLI maps these onto process exit codes: file and format problems exit
with 3, configuration or input-contract violations with 4.
"""


class MiscalError(Exception):
    """Base class for all package-specific errors."""


class InvalidInputError(MiscalError, ValueError):
    """Tensor shapes, dtypes, or values violate an operation's contract."""


class InvalidConfigError(MiscalError, ValueError):
    """A configuration object violates one of its invariants."""


class DegenerateConfigError(InvalidConfigError):
    """A config is well-formed but the requested quantity has no meaningful
    answer there (for example a zero weight on the confidence term)."""


class EmptyInputError(MiscalError, ValueError):
    """An operation that needs at least one record or example got none."""


class FormatError(MiscalError, ValueError):
    """A dataset or checkpoint file is malformed; the message names the byte
    offset of the offending content when one is known."""

    def __init__(self, message: str, offset: int | None = None):
        if offset is not None:
            message = f"{message} (byte offset {offset})"
        super().__init__(message)
        self.offset = offset
