"""Exception types shared across the package.

``ValidationError`` and its subclasses signal caller mistakes (bad shapes,
values, or ordering of operations); the remaining types signal runtime
conditions such as conditioning failures or exhausted budgets. The CLI maps
validation-style errors to exit code 2 and budget/infeasibility errors to 3.
"""


class ValidationError(ValueError):
    """Invalid arguments, shapes, or values supplied by the caller."""


class InvalidHyperparameterError(ValidationError):
    """Hyperparameters violate positivity or shape requirements."""


class IllConditionedKernelError(RuntimeError):
    """Cholesky factorisation failed even at the maximum jitter level."""

    def __init__(self, message: str, jitter: float):
        super().__init__(message)
        self.jitter = jitter


class FitInitialisationError(RuntimeError):
    """The log-marginal likelihood is non-finite at the fit starting point."""


class OptimisationError(RuntimeError):
    """An inner optimiser encountered a non-finite value or gradient."""

    def __init__(self, message: str, iterate=None):
        super().__init__(message)
        self.iterate = iterate


class BaseSampleError(ValidationError):
    """Stored base samples are incompatible with the joint batch size."""


class InfeasibleStartError(RuntimeError):
    """No feasible point was found from a single optimiser start."""


class GlobalInfeasibilityError(RuntimeError):
    """Every multistart run failed to produce a feasible candidate."""


class CombinatorialExplosionError(ValidationError):
    """The discrete-value enumeration exceeds the configured cap."""


class BudgetError(RuntimeError):
    """The campaign evaluation budget does not cover the request."""


class OrderingError(RuntimeError):
    """Campaign operations were called in an unsupported order."""


class UnmatchedCandidateError(ValidationError):
    """Told inputs do not match any pending candidate."""


class ZeroVarianceError(ValidationError):
    """Standardisation of a constant vector was requested."""


class SchemaVersionError(RuntimeError):
    """A campaign state file is unreadable or from an unsupported schema."""


class CampaignLockedError(RuntimeError):
    """Another process holds the campaign lock file."""
