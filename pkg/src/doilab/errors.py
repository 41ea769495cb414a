"""Exception types shared across the package."""


class DoiLabError(Exception):
    """Base class for all package errors."""


class ParameterError(DoiLabError, ValueError):
    pass


class SymmetryError(ParameterError):
    """Input matrix is not Hermitian within tolerance."""


class EvaluationError(DoiLabError, ArithmeticError):
    """A scalar function produced a non-finite value on a spectrum."""


class NearSingularError(EvaluationError):
    """Resolvent point too close to the spectrum."""


class KernelEvaluationError(EvaluationError):
    pass


class DegenerateKernelError(KernelEvaluationError):
    """Quotient kernel has a vanishing denominator off the diagonal."""


class ConstructionError(DoiLabError):
    pass


class NoConvergenceError(DoiLabError):
    pass


class DomainError(ParameterError):
    pass


class DiscontinuityError(DoiLabError):
    pass


class ConfigError(DoiLabError):
    pass
