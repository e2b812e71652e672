"""Exception hierarchy shared across the package.

The CLI maps these onto process exit codes: ConfigError -> 2, any
NumericalError -> 3, OSError -> 4.
"""


class SseLabError(Exception):
    """Base class for all package errors."""


class ConfigError(SseLabError):
    """Invalid parameters, config files, or command-line input."""


class NumericalError(SseLabError):
    """A computation failed or refused to produce a trustworthy result."""


class EigensolverError(NumericalError):
    """Dense symmetric eigensolver did not converge."""


class BracketingError(NumericalError):
    """Bisection endpoints do not bracket the sought transition."""


class DivisionGuardError(NumericalError):
    """A denominator fell below the double-precision noise floor."""


class StepSizeError(NumericalError):
    """Requested integrator step violates its stability precondition."""


class DegenerateProfileError(NumericalError):
    """Spectral profile carries no usable signal (all values ~ 0)."""


class InsufficientSamplesError(NumericalError):
    """Too few samples for the requested spectral resolution."""


class DomainError(NumericalError):
    """Closed-form expression evaluated outside its domain."""
