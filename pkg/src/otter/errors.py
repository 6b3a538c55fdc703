"""Exception types raised across the package.

Every error derives from :class:`OtterError`, which is a ``ValueError`` so
callers that only care about "bad input" can catch the builtin.
"""


class OtterError(ValueError):
    """Base class for all package errors."""


class NumericError(OtterError):
    """Raised when a computation produces a non-finite or degenerate value."""


# numerics
class ZeroRowNorm(NumericError):
    def __init__(self, row_index: int):
        super().__init__(f"row {row_index} has zero norm and cannot be normalized")
        self.row_index = row_index


class DimensionMismatch(OtterError):
    pass


class ShapeMismatch(OtterError):
    pass


class NonFiniteLoss(NumericError):
    pass


# sinkhorn
class NotSquare(OtterError):
    pass


class NonFinite(NumericError):
    pass


# targets
class DegenerateRow(OtterError):
    pass


class AlphaOutOfRange(OtterError):
    pass


# losses / trainer
class MethodUnknown(OtterError):
    pass


class StepOutOfRange(OtterError):
    pass


class EmptyDataset(OtterError):
    pass


class TrainingDiverged(NumericError):
    """A numeric failure inside the training loop, tagged with the step index."""

    def __init__(self, step: int, cause: Exception):
        super().__init__(f"step {step}: {cause}")
        self.step = step
        self.cause = cause


# synthdata
class ConfigInvalid(OtterError):
    pass


class FormatError(OtterError):
    def __init__(self, message: str, offset: int | None = None):
        where = f" (at {offset})" if offset is not None else ""
        super().__init__(message + where)
        self.offset = offset


class NonFiniteValue(OtterError):
    def __init__(self, index: int, block: str = "data"):
        super().__init__(f"non-finite value in {block} block at flat index {index}")
        self.index = index
        self.block = block


# evaluation
class KTooLarge(OtterError):
    pass


class EmptyLabelSet(OtterError):
    def __init__(self, index: int):
        super().__init__(f"true-label set for image {index} is empty")
        self.index = index


class NoEligiblePairs(OtterError):
    pass


class EmptyQuery(OtterError):
    def __init__(self, index: int):
        super().__init__(f"query {index} has an empty attribute set")
        self.index = index
