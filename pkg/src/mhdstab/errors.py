"""Exception hierarchy shared across the package.

Validation problems (bad parameters, unsupported regimes) derive from
ValidationError; breakdowns of the numerics themselves derive from
NumericalError.  The CLI maps these to exit codes 2 and 3 respectively.
"""


class ValidationError(ValueError):
    """Input outside the supported domain."""


class DomainError(ValidationError):
    """Parameter violates a mathematical precondition (e.g. rho <= 0)."""


class UnsupportedCaseError(ValidationError):
    """Input is valid but outside the scope of this implementation."""


class DegenerateBoundaryError(ValidationError):
    """Classification requested exactly on a type boundary."""


class DegenerateShockError(ValidationError):
    """Jump vanishes; no shock to analyze."""


class NumericalError(RuntimeError):
    """A numerical procedure failed to converge or lost validity."""


class ZeroOnContourError(NumericalError):
    """Sampled function became indistinguishable from zero on a contour."""


class RefinementBudgetError(NumericalError):
    """Adaptive refinement exceeded its budget without converging."""


class SplittingError(NumericalError):
    """Dimension of a decaying subspace differs from the expected count."""


class BracketError(NumericalError):
    """Root bracketing failed (no sign change on the given interval)."""


class ConvergenceError(NumericalError):
    """Iterative scheme exhausted its budget."""
