"""Exception types shared across the package."""


class EmodartsError(Exception):
    """Base class for package errors."""


class ContractViolation(EmodartsError):
    """An API was called outside its stated contract (shape mismatch,
    missing gradient, backward on a non-scalar, and so on)."""


class GraphReuseError(ContractViolation):
    """backward() was invoked through a graph that has already been
    consumed by a previous backward() call."""


class NumericFault(EmodartsError):
    """A training loss became non-finite.

    Carries the per-epoch history rows collected so far, so callers can
    flush partial diagnostics before aborting.
    """

    def __init__(self, message: str, history=None):
        super().__init__(message)
        self.history = history if history is not None else []


class DataError(EmodartsError):
    """A data file could not be read, parsed, or validated."""
