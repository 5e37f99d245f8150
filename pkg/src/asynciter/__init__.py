"""Simulator and verifier for asynchronous fixed-point iterations with
unbounded delays, out-of-order labels and flexible communication."""

__version__ = "0.1.0"

from .errors import DivergenceError, InputError, InsufficientDataError, NumericError
from .problem import (
    DatasetInstance,
    NonsmoothPart,
    ProblemInstance,
    SmoothPart,
    gradient,
    objective,
    prox,
    reference_fixed_point,
)
from .operators import GradientTypeOperator, apply, contraction_bound
from .schedule import Schedule, ValidationReport, generate, validate
from .engine import FlexiblePolicy, Trace, iterate_at, run
from .analysis import (
    EpochSequence,
    MacroIterationSequence,
    NormSpec,
    VerificationReport,
    check_freshness,
    epochs,
    macro_iterations,
    residual_series,
    stopping_index,
    verify_norm_constraint,
    verify_rate_bound,
)
