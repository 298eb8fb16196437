"""Exception types shared across the package."""

from __future__ import annotations


class DeptrainError(Exception):
    """Base class for all package errors."""


# distributions
class NonPositiveRange(DeptrainError, ValueError):
    pass


class MassEscape(DeptrainError, ValueError):
    pass


class GridMismatch(DeptrainError, ValueError):
    pass


class GridTooSmall(DeptrainError, ValueError):
    pass


class BranchCut(DeptrainError, ArithmeticError):
    pass


class UndefinedMomentWarning(UserWarning):
    pass


# scenario
class InstanceError(DeptrainError, ValueError):
    """Schema or invariant violation in a scenario; message names the field."""


class UnknownId(DeptrainError, KeyError):
    pass


class ZeroResource(DeptrainError, ValueError):
    pass


# dataset selection
class EmptySelection(DeptrainError, ValueError):
    pass


class TooLarge(DeptrainError, ValueError):
    pass


class Exhausted(DeptrainError):
    pass


# planning / placement
class Infeasible(DeptrainError):
    def __init__(self, message: str = "no feasible plan", attempts=None):
        super().__init__(message)
        self.attempts = list(attempts or [])


class PlacementInfeasible(Infeasible):
    pass


# fitting
class DegenerateTrace(DeptrainError, ValueError):
    pass


class FitDiverged(DeptrainError, RuntimeError):
    pass


class InsufficientSamples(DeptrainError, ValueError):
    pass
