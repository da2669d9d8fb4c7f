"""Exception hierarchy shared by all modules."""

from __future__ import annotations


class ReppLabError(Exception):
    """Base class for every error raised by repp_lab."""


class NonFiniteInput(ReppLabError, ValueError):
    pass


class OutOfDomain(ReppLabError, ValueError):
    pass


class AtBranchBoundary(ReppLabError, ValueError):
    """Derivative requested at (or within tolerance of) a branch junction."""

    def __init__(self, x: float, index: int | None = None):
        self.x = x
        self.index = index
        where = f" at orbit index {index}" if index is not None else ""
        super().__init__(f"x={x!r} lies on a branch junction{where}")


class NoSignChange(ReppLabError, ValueError):
    pass


class NotPrimePeriod(ReppLabError, ValueError):
    pass


class NoConvergence(ReppLabError, RuntimeError):
    pass


class BetaTooLarge(ReppLabError, ValueError):
    pass


class WrongFamily(ReppLabError, TypeError):
    pass


class TargetUnreachable(ReppLabError, ValueError):
    pass


class RootNotBracketed(ReppLabError, ValueError):
    pass


class NoPeriodicPointFound(ReppLabError, LookupError):
    pass


class ReturnCapExceeded(ReppLabError, RuntimeError):
    """An excursion outside the base set exceeded the iteration cap."""

    def __init__(self, cap: int):
        self.cap = cap
        super().__init__(f"return time exceeded cap={cap}")


class InsufficientBaseSamples(ReppLabError, ValueError):
    pass


class InsufficientData(ReppLabError, ValueError):
    pass


class TooFewSamples(ReppLabError, ValueError):
    pass


class ZeroMean(ReppLabError, ValueError):
    pass


class TargetNotCylinderAligned(ReppLabError, ValueError):
    pass


class DepthInsufficient(ReppLabError, RuntimeError):
    pass


class NotPeriodic(ReppLabError, ValueError):
    pass


class ConfigInvalid(ReppLabError, ValueError):
    pass


class ScenarioFailed(ReppLabError, RuntimeError):
    def __init__(self, failing: list[str]):
        self.failing = failing
        super().__init__("failing reports: " + ", ".join(failing))


class IoFailure(ReppLabError, OSError):
    pass
