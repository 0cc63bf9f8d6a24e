"""Exception types shared across the package."""


class DpdError(Exception):
    """Base class for all dpdglm errors."""


class DomainError(DpdError, ValueError):
    """A value lies outside the family support or parameter domain."""


class UnsupportedOperationError(DpdError):
    """Operation not defined for this family (e.g. scale score with fixed scale)."""


class InputError(DpdError, ValueError):
    """Invalid model input (rank-deficient design, mismatched shapes, ...)."""


class FormulaError(InputError):
    """A formula term references a missing column or cannot be evaluated."""


class IngestionError(InputError):
    """A CSV file could not be parsed into a numeric table."""


class ConvergenceError(DpdError):
    """An iterative computation failed to converge.

    Carries the iteration trace (solver) or the achieved tail bound
    (series truncation), whichever applies.
    """

    def __init__(self, message, trace=None, tail_bound=None):
        super().__init__(message)
        self.trace = trace
        self.tail_bound = tail_bound


class InferenceError(DpdError):
    """Asymptotic-variance computation failed (singular curvature matrix)."""


class DegenerateInferenceError(InferenceError):
    """A standard error is zero or an efficiency denominator vanished."""


class PartialCurveError(DpdError):
    """Some fits along a tuning-parameter curve failed.

    ``failed_alphas`` lists the offending tuning-parameter values.
    """

    def __init__(self, message, failed_alphas):
        super().__init__(message)
        self.failed_alphas = list(failed_alphas)
