"""Exception hierarchy for convex_smooth."""


class ConvexSmoothError(Exception):
    """Base class for all library errors."""


class InvalidEpsilon(ConvexSmoothError, ValueError):
    pass


class EmptyDomain(ConvexSmoothError, ValueError):
    pass


class EmptyGrid(ConvexSmoothError, ValueError):
    pass


class EmptyList(ConvexSmoothError, ValueError):
    pass


class DomainMismatch(ConvexSmoothError, ValueError):
    pass


class DomainTooSmall(ConvexSmoothError, ValueError):
    pass


class RankDeficient(ConvexSmoothError, ValueError):
    pass


class UnboundedBelow(ConvexSmoothError, ArithmeticError):
    pass


class LipschitzTooSmall(ConvexSmoothError, ValueError):
    pass


class NoIndependentProbe(ConvexSmoothError, ValueError):
    pass


class GradientsUnavailable(ConvexSmoothError, ValueError):
    pass


class InconclusiveCoercivity(ConvexSmoothError, RuntimeError):
    pass


class BudgetExceeded(ConvexSmoothError, RuntimeError):
    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class StageFailure(ConvexSmoothError, RuntimeError):
    def __init__(self, message, stage=None, residual=None):
        super().__init__(message)
        self.stage = stage
        self.residual = residual


class NotProperlyConvex(ConvexSmoothError, ValueError):
    def __init__(self, message, evidence=None):
        super().__init__(message)
        self.evidence = evidence or {}


class ScheduleInfeasible(ConvexSmoothError, RuntimeError):
    def __init__(self, message, stage=None, inequality=None):
        super().__init__(message)
        self.stage = stage
        self.inequality = inequality


class SublevelNotCompact(ConvexSmoothError, ValueError):
    pass


class DegenerateBody(ConvexSmoothError, ValueError):
    pass


class DegenerateSublevel(ConvexSmoothError, ValueError):
    pass


class SpecParse(ConvexSmoothError, ValueError):
    def __init__(self, message, location="$"):
        super().__init__(f"{location}: {message}")
        self.location = location
