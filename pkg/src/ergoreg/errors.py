"""Exception types raised by ergoreg."""


class ErgoregError(Exception):
    """Base class for all library errors."""


class DomainError(ErgoregError, ValueError):
    """An action point lies outside the open action box."""


class SmallDivisorError(ErgoregError, ZeroDivisionError):
    """A resonant divisor k.g(I) was passed where a nonresonant one is required."""


class QuadratureError(ErgoregError, ArithmeticError):
    """An integrand produced a non-finite value at a quadrature node."""

    def __init__(self, message, node=None):
        super().__init__(message)
        self.node = node


class ConfigError(ErgoregError, ValueError):
    """Invalid experiment configuration; ``field`` names the offending key."""

    def __init__(self, field, message):
        super().__init__(f"{field}: {message}")
        self.field = field


class StepSizeError(ErgoregError, ValueError):
    """Time step too coarse to resolve the damping rate."""


class InterpolationError(ErgoregError, LookupError):
    """A time was requested that is not on the sampled noise path."""


class NotAWitnessError(ErgoregError, ValueError):
    """A resonance point does not witness R_k(f): the coefficient vanishes nearby."""


class InequalityFailure(ErgoregError, AssertionError):
    """A numerically checked inequality was violated; ``witness`` holds the offending input."""

    def __init__(self, message, witness=None):
        super().__init__(message)
        self.witness = witness


class BoundDomainWarning(UserWarning):
    """A bound's logarithm left its intended domain and was floored."""


class ResolutionWarning(UserWarning):
    """A quadrature grid was capped below the resolution the integrand asks for."""
