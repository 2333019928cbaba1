"""Exception types raised across the co-design pipeline."""


class CodesignError(Exception):
    """Base class for all package errors."""


class InvalidRange(CodesignError, ValueError):
    pass


class GridExhausted(CodesignError):
    """Not enough unique grid points to satisfy a sampling request."""


class IdOutOfRange(CodesignError, IndexError):
    pass


class MalformedFile(CodesignError, ValueError):
    """A persisted artifact could not be parsed.

    ``line`` is the 1-based line number of the offending record, when known.
    """

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class KTooLarge(CodesignError, ValueError):
    pass


class DegenerateDuration(CodesignError, ValueError):
    pass


class GimbalLock(CodesignError, ArithmeticError):
    pass


class NoEquilibrium(CodesignError):
    pass


class DimensionMismatch(CodesignError, ValueError):
    pass


class StepFailed(CodesignError):
    """The MPC quadratic program did not reach an optimal solution."""

    def __init__(self, status, iterations):
        self.status = status
        self.iterations = iterations
        super().__init__(f"QP status {status} after {iterations} iterations")


class LengthMismatch(CodesignError, ValueError):
    pass


class EmptyFeasibleSet(CodesignError):
    pass


class EvaluatorFailure(CodesignError):
    """The candidate evaluator itself crashed (not a candidate-level failure)."""


class ProvenanceMismatch(CodesignError):
    pass
