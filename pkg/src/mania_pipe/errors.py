"""Exception hierarchy shared by every pipeline stage.

The CLI maps these onto exit codes: :class:`DataError` subclasses exit with 3,
:class:`NumericFailure` with 4.
"""

from __future__ import annotations


class ManiaPipeError(Exception):
    """Base class; ``stage`` names the pipeline stage that raised, when known."""

    stage: str | None = None

    def with_stage(self, stage: str) -> "ManiaPipeError":
        if self.stage is None:
            self.stage = stage
        return self

    def __str__(self) -> str:
        msg = super().__str__()
        return f"[{self.stage}] {msg}" if self.stage else msg


class DataError(ManiaPipeError):
    pass


class MissingFile(DataError, FileNotFoundError):
    pass


class SchemaViolation(DataError, ValueError):
    pass


class DanglingSegment(SchemaViolation):
    pass


class UnsupportedFormat(DataError, ValueError):
    pass


class CorruptHeader(DataError, ValueError):
    pass


class InvalidConfig(DataError, ValueError):
    pass


class InvalidRate(InvalidConfig):
    pass


class InvalidFrequency(InvalidConfig):
    pass


class OutOfRange(DataError, ValueError):
    pass


class TooShort(DataError, ValueError):
    pass


class EmptyLldSet(InvalidConfig):
    pass


class EmptyMatrix(DataError, ValueError):
    pass


class EmptyTable(DataError, ValueError):
    pass


class EmptySet(DataError, ValueError):
    pass


class DimensionMismatch(DataError, ValueError):
    pass


class ShapeMismatch(DimensionMismatch):
    pass


class BatchTooSmall(DataError, ValueError):
    pass


class SingleClass(DataError, ValueError):
    pass


class TargetTooLarge(InvalidConfig):
    pass


class IoError(DataError, OSError):
    pass


class NumericFailure(ManiaPipeError, ArithmeticError):
    """NaN or Inf detected where finite values are required."""
