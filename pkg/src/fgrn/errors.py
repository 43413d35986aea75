"""Exception hierarchy.

Two broad families matter to callers: ``NumericError`` (a computation met
contradictory or degenerate probability mass; CLI exit code 1) and
``InputError`` (bad files, shapes, labels or configuration; CLI exit code 2).
"""


class FgrnError(Exception):
    """Base class for every error raised by this package."""


class NumericError(FgrnError):
    """A numeric failure: the inputs were well-formed but inconsistent."""


class InputError(FgrnError):
    """Malformed user input: files, shapes, labels, configuration."""


class AllZeroMessage(NumericError):
    """A belief vector lost all probability mass (contradictory evidence)."""


class NoValidSamples(NumericError):
    """Every training pair in an update had zero likelihood."""


class LengthMismatch(InputError):
    """Two vectors that must share a length do not."""


class ShapeMismatch(InputError):
    """A vector or matrix does not match the declared alphabet sizes."""


class EmptyDims(InputError):
    """A product-space construction received no component cardinalities."""


class InvalidSpec(InputError):
    """A model or training specification violates its constraints."""


class EmptyDataset(InputError):
    """Training was requested on a dataset with no records."""


class TooFewRecords(InputError):
    """A split cannot produce two non-empty partitions."""


class IndexOutOfRange(InputError):
    """A class or cluster index exceeds the variable's cardinality."""


class UnknownLabel(InputError):
    """A value is not in the declared alphabet of its column."""

    def __init__(self, message: str, row: int | None = None, col: str | int | None = None):
        super().__init__(message)
        self.row = row
        self.col = col


class ParseError(InputError):
    """A data or schema file could not be parsed."""

    def __init__(self, message: str, row: int | None = None, col: str | int | None = None):
        super().__init__(message)
        self.row = row
        self.col = col


class Paused(FgrnError):
    """A paused conditional block was asked to emit downward; hold the message."""


class NotInBatchMode(FgrnError):
    """Message storage was attempted outside the batch learning phase."""
