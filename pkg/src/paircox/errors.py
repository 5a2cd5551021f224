"""Exception types raised by the estimation and data layers."""


class PaircoxError(Exception):
    """Base class for all package-specific errors."""


class CohortSchemaError(PaircoxError):
    """CSV header does not match the documented cohort schema."""


class CohortRowError(PaircoxError):
    """A row violates an observation invariant.

    Carries the offending row id and the rule that failed.
    """

    def __init__(self, row_id, rule):
        self.row_id = row_id
        self.rule = rule
        super().__init__(f"row {row_id!r} violates invariant: {rule}")


class EmptyCohortError(PaircoxError):
    """No observations after ingest/filtering."""


class DegenerateCovariateError(PaircoxError):
    """A covariate column is constant and cannot be min-max scaled."""


class NoEventsError(PaircoxError):
    """Requested transition has zero observed events."""


class RiskSetError(PaircoxError):
    """Empty risk set at an observed event time."""


class RankDeficiencyError(PaircoxError):
    """Information matrix is singular at a point with non-zero gradient."""

    def __init__(self, message, columns=None):
        self.columns = columns or []
        super().__init__(message)


class ConvergenceError(PaircoxError):
    """Newton iteration failed to converge.

    Attributes
    ----------
    last_beta : ndarray
        Final iterate when the error was raised.
    grad_norm : float
        Infinity norm of the gradient at the final iterate.
    iterations : int
    """

    def __init__(self, message, last_beta=None, grad_norm=None, iterations=None):
        self.last_beta = last_beta
        self.grad_norm = grad_norm
        self.iterations = iterations
        super().__init__(message)


class DegenerateObjectiveError(PaircoxError):
    """Pairwise objective carries no information (e.g. every pair invalid)."""


class BootstrapError(PaircoxError):
    """Too many bootstrap replicates failed to converge."""
