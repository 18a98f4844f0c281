"""Inhomogeneous box-filling coalescence: mechanisms, composed pgfs, simulation and genealogy."""

from .composition import (
    ComposedPgf,
    Criticality,
    classify,
    compose_chain,
    concatenate,
    empty_prob,
    eval_chain,
    mean_chain,
    pmf_chain,
)
from .errors import (
    BudgetExceededError,
    CoalescenceError,
    DomainError,
    InsufficientSamplesError,
    InvalidMechanismError,
    NullConditioningError,
    ResourceError,
    SamplingCutoffError,
    TractabilityError,
    UnsupportedCombinationError,
    WindowMismatchError,
)
from .mechanisms import (
    Affine,
    FiniteSupport,
    LinearFractional,
    Mechanism,
    MechanismSchedule,
    QuadraticStep,
    Schedule,
    SibuyaMixture,
    ThetaGeneral,
    named_schedule,
)
from .simulator import RunConfig, RunLog, replay, run, run_replicas

__version__ = "0.1.0"
