"""Exception types raised across the package."""


class MrnprkError(Exception):
    """Base class for all package errors."""


class UsageError(MrnprkError):
    """Malformed user input (method names, configuration files)."""


class AssumptionViolation(MrnprkError):
    """The irreducible stage sets of a tensor do not cover every stage."""


class OrderPrerequisite(MrnprkError):
    """A base tableau does not have the classical order a construction needs."""


class DegenerateCoefficient(MrnprkError):
    """A closed-form coupling coefficient would divide by zero."""


class NumericalFailure(MrnprkError):
    """Base class for failures that map to CLI exit code 3."""


class NewtonDivergence(NumericalFailure):
    pass


class NonIMEXTensor(MrnprkError):
    """Tensor has a coefficient a_ijk != 0 with j > i or k >= i."""


class SolveFailure(NumericalFailure):
    pass


class SingularDenominator(NumericalFailure):
    pass


class DegreeMismatch(NumericalFailure):
    pass
