"""Exception hierarchy shared across the package."""


class WignerMatchError(Exception):
    """Base class for all errors raised by this package."""


class ParameterError(WignerMatchError, ValueError):
    """An argument violates a documented precondition."""


class NumericError(WignerMatchError, ArithmeticError):
    """A numerical routine failed to reach its accuracy contract.

    Carries the achieved error estimate when one is available.
    """

    def __init__(self, message: str, achieved: float | None = None):
        super().__init__(message)
        self.achieved = achieved


class SubspaceError(WignerMatchError, RuntimeError):
    """A subspace intersection collapsed to {0}.

    ``family`` names the constraint block that removed the last dimension.
    """

    def __init__(self, message: str, family: str):
        super().__init__(message)
        self.family = family


class EtaSelectionError(WignerMatchError, RuntimeError):
    """No usable test direction survived projection after repeated redraws."""


class SamplingError(WignerMatchError, RuntimeError):
    """Sign-vector resampling exhausted its budget.

    ``condition`` is the 1-based index of the first violated condition.
    """

    def __init__(self, message: str, condition: int):
        super().__init__(message)
        self.condition = condition


class StepError(WignerMatchError, RuntimeError):
    """A single iteration step could not be completed.

    ``step`` is the level at which the failure occurred and ``kind`` is a
    short machine-readable tag (``subspace``, ``eta``, ``sampling``,
    ``growth``).
    """

    def __init__(self, message: str, step: int, kind: str):
        super().__init__(message)
        self.step = step
        self.kind = kind


class FileFormatError(WignerMatchError, OSError):
    """An on-disk artifact does not match the documented layout."""
