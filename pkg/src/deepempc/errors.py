"""Exception hierarchy shared by all modules.

Two families matter for the CLI exit codes: precondition violations
(bad inputs, exit code 2) and numerical failures (well-posed inputs on
which an algorithm could not finish, exit code 3).
"""


class DeepEmpcError(Exception):
    """Base class for every error raised by this package."""


class PreconditionError(DeepEmpcError, ValueError):
    """An argument violates a documented precondition."""


class NumericalError(DeepEmpcError, RuntimeError):
    """A numerical routine failed on otherwise valid inputs."""


# -- precondition family ----------------------------------------------------

class DimensionMismatch(PreconditionError):
    pass


class UnknownScenario(PreconditionError):
    pass


class EmptySet(PreconditionError):
    pass


class EmptyPieces(PreconditionError):
    pass


class EmptyDenominator(PreconditionError):
    pass


class EmptyPositiveReference(PreconditionError):
    pass


class SingleClassInput(PreconditionError):
    pass


class NonInvertible(PreconditionError):
    pass


class DiscontinuousInput(PreconditionError):
    pass


class RankDeficient(PreconditionError):
    pass


class PreconditionViolated(PreconditionError):
    pass


class InfeasibleMargin(PreconditionError):
    pass


# -- numerical family -------------------------------------------------------

class NotPositiveDefinite(NumericalError):
    pass


class NoConvergence(NumericalError):
    pass


class MaxIterations(NumericalError):
    pass


class NonConvex(NumericalError):
    pass


class QpInfeasible(NumericalError):
    """The constraint set of a QP is empty (phase-1 certificate)."""


class ProjectionInfeasible(NumericalError):
    pass


class OutsidePartition(NumericalError):
    """Point-location failure: the query state lies in no region."""


class ControllerInfeasible(NumericalError):
    """A closed-loop controller failed at some rollout step."""

    def __init__(self, step: int, message: str = ""):
        self.step = step
        super().__init__(message or f"controller infeasible at step {step}")


class SamplingExhausted(NumericalError):
    pass


class EnumerationBudgetExceeded(NumericalError):
    pass


class DegenerateActiveSet(NumericalError):
    pass


class NonFiniteLoss(NumericalError):
    pass
