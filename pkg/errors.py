"""Exceptions raised by the photocount tool."""

from typing import Optional


class PhotocountError(Exception):
    """Base class; trajectory_index is set when a batch run re-raises."""

    def __init__(self, message: str = "", trajectory_index: Optional[int] = None):
        super().__init__(message)
        self.trajectory_index = trajectory_index


class InvalidParameter(PhotocountError, ValueError):
    pass


class NonConvergent(PhotocountError):
    pass


class VacuumOnly(PhotocountError):
    """Nothing left to count: the jump trace vanishes."""


class UnsupportedFamily(PhotocountError):
    pass


class ZeroProbability(PhotocountError):
    pass


class UnsupportedOrder(PhotocountError):
    pass


class StepTooLarge(PhotocountError):
    pass


class TruncationExhausted(PhotocountError):
    pass


class InsufficientSamples(PhotocountError):
    pass


class InconsistentForms(PhotocountError):
    """Two exact closed forms of the same quantity disagree."""


class ScenarioError(InvalidParameter):
    pass
