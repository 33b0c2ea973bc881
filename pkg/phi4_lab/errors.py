"""
Exceptions and warnings raised by phi4-lab.
"""


class Phi4Error(Exception):
    """Base class for all phi4-lab errors."""


class ConfigError(Phi4Error, ValueError):
    """Invalid or incomplete configuration."""


class AssertionFailed(Phi4Error):
    """An enabled experiment assertion did not hold."""


class GridMismatch(Phi4Error, ValueError):
    pass


class NonHermitianInput(Phi4Error, ValueError):
    pass


class GridTooCoarse(Phi4Error, ValueError):
    pass


class ThetaOutOfRange(Phi4Error, ValueError):
    pass


class BlockIndexOutOfRange(Phi4Error, IndexError):
    pass


class NegativeTime(Phi4Error, ValueError):
    pass


class UnknownInequality(Phi4Error, KeyError):
    def __str__(self):
        return Exception.__str__(self)


class FitFailed(Phi4Error):
    pass


class TimeOutOfRange(Phi4Error, ValueError):
    pass


class QuadratureNotConverged(Phi4Error):
    pass


class NonIncreasingTimes(Phi4Error, ValueError):
    pass


class DivergentKernel(Phi4Error, ValueError):
    pass


class TooFewRealizations(Phi4Error, ValueError):
    pass


class NestingViolation(Phi4Error, ValueError):
    pass


class IncommensurateGrids(Phi4Error, ValueError):
    pass


class SnapshotFormatError(Phi4Error, ValueError):
    pass


class PicardDiverged(Phi4Error):
    """Picard iteration failed to contract on the current window."""

    def __init__(self, message, iterations=0):
        super().__init__(message)
        self.iterations = iterations


class SolverAbort(Phi4Error):
    """The gluing window shrank below one time step (blow-up evidence)."""

    def __init__(self, t):
        super().__init__(f"Picard window shrank below dt at t={t:.6g}")
        self.t = t


class OutOfRegimeWarning(UserWarning):
    """Inputs lie outside the regime where an estimate is claimed."""


class ConditionWarning(UserWarning):
    """A smallness condition on the regularity parameters is violated."""
