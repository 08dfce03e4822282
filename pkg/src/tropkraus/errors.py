"""Exception hierarchy shared by all tropkraus modules."""


class TropkrausError(Exception):
    """Base class for all errors raised by this package."""


class UsageError(TropkrausError, ValueError):
    """Malformed call: empty input, dimension mismatch, bad flag value."""


class DomainError(TropkrausError, ValueError):
    """Input outside the mathematical domain of an operation (e.g. a
    matrix that must be positive definite but is not)."""


class InstanceError(TropkrausError, ValueError):
    """Problem instance is structurally inconsistent (family vs automaton
    dimensions, node without incoming edges, certificate/family mismatch)."""


class NumericFailure(TropkrausError, ArithmeticError):
    """A numerical kernel failed to converge or overflowed."""


class RiccatiEscapeError(TropkrausError, ArithmeticError):
    """Finite-time escape of an indefinite Riccati flow: the X(tau) block
    became singular and the flow is not defined at this horizon."""

    def __init__(self, message, smallest_singular_value=None, tau=None, mode=None):
        super().__init__(message)
        self.smallest_singular_value = smallest_singular_value
        self.tau = tau
        self.mode = mode


class DivergenceError(TropkrausError, ArithmeticError):
    """An iteration produced a non-finite or unboundedly growing iterate."""

    def __init__(self, message, iterations=None):
        super().__init__(message)
        self.iterations = iterations


class ResourceLimitError(TropkrausError, RuntimeError):
    """A configured size or budget cap would be exceeded."""
