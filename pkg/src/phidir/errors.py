"""Exception hierarchy shared by all phidir modules."""


class PhidirError(Exception):
    """Base class for every error raised by phidir."""


class SymbolError(PhidirError, ValueError):
    """Invalid integrand data (bad exponent, grammar violation, non-monotone a)."""


class DomainError(PhidirError, ValueError):
    """Evaluation requested outside the validity domain of a function or table."""


class OutOfRangeError(DomainError):
    """Argument of a^{-1} is not below sup a."""


class EllipticityError(PhidirError):
    """Sampled ellipticity constant is not positive."""


class NoRadialSolution(PhidirError):
    """The boundary gap cannot be bridged by any admissible flux constant."""


class ConvergenceError(PhidirError):
    """Iteration failed; ``trace`` carries the iteration history."""

    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = trace if trace is not None else []


class PreconditionError(PhidirError, ValueError):
    """A check was invoked on inputs that violate its hypothesis."""


class ConfigError(PhidirError, ValueError):
    """Run configuration failed validation; ``path`` names the offending key."""

    def __init__(self, message, path=""):
        super().__init__(f"{path}: {message}" if path else message)
        self.path = path
