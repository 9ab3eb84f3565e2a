"""Exception hierarchy shared by every layer of the package."""


class FinslerError(Exception):
    """Base class for all package errors."""


class DomainError(FinslerError, ValueError):
    """A value left the domain of an elementary function or of a metric."""


class SpaceMismatch(FinslerError):
    pass


class OrderExceeded(FinslerError):
    """Requested derivative lies beyond the truncation orders of a jet."""


class SingularMetric(FinslerError):
    def __init__(self, message, determinant=None):
        super().__init__(message)
        self.determinant = determinant


class QuadratureNonConvergence(FinslerError):
    pass


class ExpressionError(FinslerError, ValueError):
    pass


class ExpressionSyntaxError(ExpressionError):
    def __init__(self, message, position=None):
        if position is not None:
            message = f"{message} at position {position}"
        super().__init__(message)
        self.position = position


class UnknownIdentifier(ExpressionError):
    def __init__(self, name, position=None):
        where = "" if position is None else f" at position {position}"
        super().__init__(f"unknown identifier {name!r}{where}")
        self.name = name
        self.position = position


class InvalidParameters(FinslerError, ValueError):
    pass


class StructureViolation(FinslerError):
    def __init__(self, equation, point, residual):
        point = tuple(float(c) for c in point)
        super().__init__(
            f"structure equation {equation} violated at x={point}: residual {residual:.3e}"
        )
        self.equation = equation
        self.point = point
        self.residual = residual


class DegenerateForm(FinslerError):
    pass


class DegenerateDenominator(FinslerError):
    pass


class PreconditionFailed(FinslerError):
    pass


class ConfigError(FinslerError):
    pass
