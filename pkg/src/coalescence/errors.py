"""Exception hierarchy shared by all modules.

The CLI maps these onto its exit codes: domain/validation problems exit 1,
resource and sampling exhaustion exit 3.
"""


class CoalescenceError(Exception):
    """Base class for every error raised by this package."""


class DomainError(CoalescenceError, ValueError):
    """An argument lies outside the domain of the operation (e.g. z outside [0, 1])."""


class InvalidMechanismError(CoalescenceError, ValueError):
    """A mechanism or schedule fails validation where a valid one is required."""

    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))


class UnsupportedCombinationError(CoalescenceError):
    """The requested families cannot be composed in closed form."""


class UnsupportedOperationError(CoalescenceError):
    """The family does not offer this operation (e.g. sampling ThetaGeneral)."""


class WindowMismatchError(CoalescenceError, ValueError):
    """Concatenated windows do not share their middle index."""


class NullConditioningError(CoalescenceError, ValueError):
    """Conditioning on an event of probability zero."""


class TractabilityError(CoalescenceError):
    """Input exceeds the bound under which exact computation is offered."""


class ResourceError(CoalescenceError):
    """A configured resource budget was exceeded."""


class BudgetExceededError(ResourceError):
    """Simulation produced more boxes than the budget allows.

    ``partial`` holds the per-level box counts generated before the abort.
    """

    def __init__(self, message, partial=None):
        super().__init__(message)
        self.partial = partial or {}


class SamplingCutoffError(ResourceError):
    """A heavy-tailed draw exceeded the sampler's cutoff."""


class InsufficientSamplesError(ResourceError):
    """Too few samples satisfy the conditioning event."""
