"""Exception hierarchy shared by every module."""


class WeylcpsError(Exception):
    """Base class for all errors raised by this package."""


class ExprSyntaxError(WeylcpsError, SyntaxError):
    """Malformed expression source.

    Carries the zero-based character ``position`` and the tokens that
    would have been accepted there.
    """

    def __init__(self, message, position, expected=()):
        self.position = position
        self.expected = tuple(expected)
        detail = f"{message} at position {position}"
        if self.expected:
            detail += f" (expected {', '.join(self.expected)})"
        super().__init__(detail)


class UnknownIdentifier(WeylcpsError, NameError):
    def __init__(self, name):
        self.name = name
        super().__init__(f"unknown identifier {name!r}")


class ArityError(WeylcpsError, TypeError):
    pass


class DomainError(WeylcpsError, ArithmeticError):
    """A function was evaluated outside its real domain (log, sqrt, 1/0)."""


class OutOfChart(WeylcpsError, ValueError):
    pass


class DegenerateMetric(WeylcpsError, ValueError):
    pass


class PeriodicityError(WeylcpsError, ValueError):
    pass


class NonPeriodicAxis(WeylcpsError, ValueError):
    pass


class FrameDegenerate(WeylcpsError, ValueError):
    pass


class DimensionError(WeylcpsError, ValueError):
    pass


class PreconditionError(WeylcpsError, ValueError):
    """Input data fails a stated precondition (unit length, vanishing, ...)."""


class NotClosed(PreconditionError):
    pass


class NotParallel(PreconditionError):
    pass


class ToleranceNotMet(WeylcpsError, RuntimeError):
    pass


class ScenarioParseError(WeylcpsError, ValueError):
    def __init__(self, message, line, column):
        self.line = line
        self.column = column
        super().__init__(f"{message} (line {line}, column {column})")


class ValidationError(WeylcpsError, ValueError):
    """Scenario content is inconsistent; ``key`` names the offending entry."""

    def __init__(self, key, message=""):
        self.key = key
        super().__init__(f"{key}: {message}" if message else key)
