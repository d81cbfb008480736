"""Exceptions raised by greenlab.

Every error carries the exit code the command line uses for it, so the CLI
never has to guess how to report a failure.
"""

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERIC = 3
EXIT_UNSUPPORTED = 4


class GreenLabError(Exception):
    exit_code = EXIT_NUMERIC
    kind = "error"

    def to_dict(self):
        return {"error": self.kind, "message": str(self), "exit_code": self.exit_code}


class ConfigError(GreenLabError):
    exit_code = EXIT_CONFIG
    kind = "config"


class NumericalError(GreenLabError):
    exit_code = EXIT_NUMERIC
    kind = "numeric"


class DomainError(NumericalError, ValueError):
    """An input lies outside the domain of an operation (zero vector, singular
    curve, non-positive exponent, ...)."""

    kind = "domain"


class DegeneracyError(NumericalError):
    """A map has (or runs into) a common zero of its components."""

    kind = "degeneracy"


class ConvergenceError(NumericalError):
    kind = "convergence"


class UnsupportedError(GreenLabError):
    """A method is not available for the given map (e.g. backward sampling of
    an arbitrary map on P^2)."""

    exit_code = EXIT_UNSUPPORTED
    kind = "unsupported"
