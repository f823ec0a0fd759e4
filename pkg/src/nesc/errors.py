"""Exception types shared across the package.

Exit-code mapping used by the CLI: ConfigError -> 2, BlowUpError -> 3,
AssumptionViolationError -> 4, anything else -> 1.
"""


class NescError(Exception):
    """Base class for all package errors."""


class ConfigError(NescError):
    """Invalid configuration: bad file, bad value, or dimension mismatch."""


class BlowUpError(NescError):
    """A simulated state became NaN/Inf.

    Carries the blow-up time, the offending state component name and,
    when available, the partial trajectory recorded up to the failure.
    """

    def __init__(self, message, t=None, component=None, partial=None):
        super().__init__(message)
        self.t = t
        self.component = component
        self.partial = partial


class AssumptionViolationError(NescError):
    """A standing assumption of the method fails (e.g. mu <= 0)."""


class SolverError(NescError):
    """An iterative solver failed to converge."""


class DiagnosticError(NescError):
    """A runtime diagnostic failed (singular Sigma, missing recorded states)."""


class InvariantError(NescError):
    """A state invariant was violated (e.g. theta_hat left its box)."""
