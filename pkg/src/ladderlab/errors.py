"""Exception hierarchy.

Every error carries the process exit code the CLI maps it to:
2 for validation failures, 3 for incompleteness, 4 for numerical failures.
"""


class LadderLabError(Exception):
    exit_code = 4


class ValidationError(LadderLabError, ValueError):
    exit_code = 2


class DomainError(ValidationError):
    """A point lies outside the surface or a quantity outside its domain."""


class InvariantError(ValidationError):
    """A metric invariant (N > 0, h SPD, Z timelike) is violated."""


class ResolutionError(ValidationError):
    pass


class EmptyLadderError(ValidationError):
    """The requested slope has no ladder (nu below the bottom height)."""


class CriticalLevelError(ValidationError):
    pass


class PreconditionError(ValidationError):
    pass


class CacheError(ValidationError):
    pass


class IncompletenessError(LadderLabError):
    """A requested window is not covered by the spectrum's completeness guarantee."""

    exit_code = 3


class CapacityError(LadderLabError):
    pass


class NonRealSpectrumError(LadderLabError):
    pass


class SolverError(LadderLabError):
    pass


class AccuracyError(LadderLabError):
    pass


class FitError(LadderLabError):
    pass


class IntegrationError(LadderLabError):
    pass


class StiffnessError(IntegrationError):
    pass
