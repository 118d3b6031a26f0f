"""Exception types shared across the package."""


class ShapeError(ValueError):
    """Array dimensions disagree with what the operation expects."""


class DomainError(ValueError):
    """Input values lie outside the domain of the operation."""


class PreconditionError(ValueError):
    """The operation was called on an object in an unusable state."""


class InfeasibleError(ValueError):
    """The request cannot be satisfied (e.g. more unique patterns than exist)."""


class FormatError(ValueError):
    """A serialized file is malformed.

    ``offset`` is the byte position at which parsing failed.
    """

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (at byte offset {offset})")
        self.offset = offset


class DescentError(FloatingPointError):
    """Energy or gradient became non-finite during descent."""

    def __init__(self, message: str, step: int):
        super().__init__(f"{message} (step {step})")
        self.step = step
