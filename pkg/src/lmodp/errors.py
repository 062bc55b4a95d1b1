"""Exception hierarchy shared by all modules."""


class LmoError(Exception):
    """Base class for every error raised by this package."""


class DomainError(LmoError, ValueError):
    """MGF evaluated outside the region where it exists."""


class InvalidOrder(LmoError, ValueError):
    pass


class GridMismatch(LmoError, ValueError):
    pass


class AllInfinite(LmoError, ValueError):
    pass


class Unachievable(LmoError, ValueError):
    pass


class NoFeasibleCandidate(LmoError):
    pass


class GridTooLarge(LmoError, ValueError):
    pass


class SchemaError(LmoError, ValueError):
    pass


class ValidationError(LmoError, ValueError):
    pass


class InvalidQuantization(LmoError, ValueError):
    pass


class EmptyInput(LmoError, ValueError):
    pass


class QuadratureNonConvergence(LmoError, ArithmeticError):
    pass


class ShapeMismatch(LmoError, ValueError):
    pass


class InfeasibleNoise(LmoError, ValueError):
    pass
