"""Exception types raised across the package."""


class GLDMError(Exception):
    """Base class for all package errors."""


class ShapeMismatch(GLDMError, ValueError):
    pass


class NonFiniteValue(GLDMError, ValueError):
    def __init__(self, index, message=None):
        self.index = index
        super().__init__(message or f"non-finite value at index {index}")


class DomainMismatch(GLDMError, ValueError):
    pass


class BadMagic(GLDMError, ValueError):
    pass


class Truncated(GLDMError, ValueError):
    pass


class IoFailure(GLDMError, OSError):
    pass


class DegenerateShape(GLDMError, ValueError):
    pass


class InfeasibleSpec(GLDMError, ValueError):
    pass


class IncompleteCoverage(GLDMError, ValueError):
    pass


class AmbiguousContributor(GLDMError, ValueError):
    pass


class InfeasibleWindow(GLDMError, ValueError):
    pass


class InvalidSpec(GLDMError, ValueError):
    pass


class NonPositiveSigma(GLDMError, ValueError):
    pass


class EmptyBatch(GLDMError, ValueError):
    pass


class EmptyDataset(GLDMError, ValueError):
    pass


class Diverged(GLDMError, ArithmeticError):
    pass


class ScheduleOrderViolation(GLDMError, ValueError):
    pass


class WindowTooLarge(GLDMError, ValueError):
    pass


class InconsistentShape(GLDMError, ValueError):
    pass


class RankTooLarge(GLDMError, ValueError):
    pass


class ModelRoleMismatch(GLDMError, ValueError):
    pass


class MissingModel(GLDMError, ValueError):
    pass


class ImageTooSmall(GLDMError, ValueError):
    pass
