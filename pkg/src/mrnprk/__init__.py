"""Multirate nonlinearly partitioned Runge--Kutta (MR-NPRK) methods."""

from .errors import (
    AssumptionViolation,
    DegenerateCoefficient,
    DegreeMismatch,
    MrnprkError,
    NewtonDivergence,
    NonIMEXTensor,
    NumericalFailure,
    OrderPrerequisite,
    SingularDenominator,
    SolveFailure,
    UsageError,
)
from .tableau import (
    ButcherTableau,
    Coupling,
    NprkTensor,
    StageSets,
    classify_coupling,
    compose,
    reduce,
    stage_sets,
    underlying_first,
    underlying_second,
    validate_sparsity,
)
from .methods import (
    first_order_example,
    first_order_lstable,
    first_order_unstable,
    mr2,
    mr3,
    resolve,
    sdirk3_lstable,
    ssp2,
    ssp3,
    Variant,
)

__version__ = "0.1.0"
