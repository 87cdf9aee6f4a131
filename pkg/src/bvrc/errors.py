"""Exception hierarchy shared by the solvers."""


class BvrcError(Exception):
    """Base class for every error raised by this package."""


class DomainError(BvrcError, ValueError):
    """An argument lies outside the range where the operation is defined."""


class InfeasibleSetError(BvrcError):
    """A convex body (usually an intersection) is empty."""


class OperatorError(BvrcError):
    """A resolvent could not be evaluated."""


class CapabilityError(BvrcError):
    """The operator does not provide the requested rule (e.g. minimal section)."""


class ConsistencyError(BvrcError):
    """A discrete a-priori bound was violated during a run.

    This almost always means the supplied variation function does not
    dominate the variation of the operator family.
    """


class NonConvergenceError(BvrcError):
    """An iterative procedure hit its cap.

    ``history`` holds the successive distances that were observed, and
    ``partial`` the last iterate when one is available.
    """

    def __init__(self, message, history=(), partial=None):
        super().__init__(message)
        self.history = list(history)
        self.partial = partial


class HypothesisError(BvrcError):
    """Inputs violate the hypothesis of an inequality oracle."""


class SelectionError(BvrcError):
    """A selection rule returned a value outside the set-valued forcing."""


class QuadratureError(BvrcError):
    """A quadrature refinement loop did not reach its tolerance."""


class DegenerateParametersError(BvrcError):
    """Fractional parameters give a vanishing normalisation constant."""
