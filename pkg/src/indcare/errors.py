"""Exception types raised by the solvers and loaders."""


class IndcareError(Exception):
    """Base class for all errors raised by this package."""


class SingularMatrix(IndcareError):
    """A (near-)singular matrix was passed to a direct factorization."""


class NoConvergence(IndcareError):
    """An iterative kernel hit its iteration cap without converging."""


class DimensionMismatch(IndcareError):
    """Coefficient shapes are inconsistent."""


class MissingCoefficient(IndcareError):
    """A required coefficient file or manifest entry is absent."""


class NotFullRowRank(IndcareError):
    """The constraint matrix J does not have full row rank."""


class SingularShift(IndcareError):
    """sigma*E^T - A^T is singular for the requested shift."""


class SingularCore(IndcareError):
    """The small Sherman-Morrison-Woodbury core matrix is singular."""


class SingularAugmented(IndcareError):
    """The augmented (bordered) system matrix is singular."""


class SingularSaddle(IndcareError):
    """The constrained saddle-point system is singular."""


class SingularSchur(IndcareError):
    """The projector's saddle factorization failed (J*E^-1*J^T singular)."""


class UnprojectedRhs(IndcareError):
    """A right-hand side violates the projection precondition."""


class NoStabilizingSolution(IndcareError):
    """The definite Riccati subproblem has no stabilizing PSD solution."""


class ShiftFailure(IndcareError):
    """No admissible shift could be produced for the low-rank inner solver."""


class StagnationNoConvergence(NoConvergence):
    """The inner iteration stagnated before reaching its tolerance."""


class TooManyUnstable(IndcareError):
    """More unstable modes were found than the configured cap."""


class NotStabilizable(IndcareError):
    """A stabilizability test failed, or the iteration diverged."""


class InnerSolverFailure(IndcareError):
    """An inner definite solve failed; carries the outer step index."""

    def __init__(self, step, cause):
        super().__init__(f"inner solve failed at outer step {step}: {cause}")
        self.step = step
        self.cause = cause


class MaxOuterExceeded(IndcareError):
    """The outer iteration hit its step cap without passing the guard."""

    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = trace
