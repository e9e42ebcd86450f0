"""Exception hierarchy shared across the package."""


class MentionDetectError(Exception):
    pass


class DimensionError(MentionDetectError, ValueError):
    """Operand extents do not conform to the operation."""

    def __init__(self, op, message, shapes=()):
        self.op = op
        self.shapes = tuple(tuple(s) for s in shapes)
        detail = ", ".join(str(s) for s in self.shapes)
        super().__init__(f"{op}: {message}" + (f" (got {detail})" if detail else ""))


class NumericError(MentionDetectError, FloatingPointError):
    """A forward or backward pass produced NaN or Inf."""


class ContractError(MentionDetectError, ValueError):
    """A caller violated an operation precondition."""


class DataError(MentionDetectError, ValueError):
    """Malformed or inconsistent corpus data."""


class FormatError(MentionDetectError, ValueError):
    """A file on disk does not match its declared format."""


class AlignmentError(DataError):
    """Sub-word pieces do not reconstruct the token sequence."""

    def __init__(self, message, position):
        self.position = position
        super().__init__(f"{message} (first divergence at token {position})")


class NotFittedError(MentionDetectError, AttributeError):
    pass
