"""Exception types shared across the package."""


class PolyMVError(Exception):
    """Base class for all package errors."""


class ExprSyntaxError(PolyMVError, ValueError):
    """Malformed coefficient expression; ``position`` is a 0-based offset."""

    def __init__(self, message, position, text=""):
        self.position = position
        self.text = text
        super().__init__(f"{message} at position {position}")


class ComponentIndexError(PolyMVError, ValueError):
    """A component selector ``xk`` lies outside ``1..N``."""


class ConfigError(PolyMVError, ValueError):
    """Invalid model configuration."""


class NumericalError(PolyMVError, ArithmeticError):
    """Base for integration/simulation failures."""


class ToleranceUnachievableError(NumericalError):
    """Step size underflowed while the solution stayed bounded."""


class NonFiniteStateError(NumericalError):
    def __init__(self, message, index=None, step=None):
        self.index = index
        self.step = step
        super().__init__(message)


class SpanError(PolyMVError, ValueError):
    """Requested times fall outside the span of a computed solution."""


class TemplateMismatchError(PolyMVError, ValueError):
    """Model maps do not match a required structural template."""
