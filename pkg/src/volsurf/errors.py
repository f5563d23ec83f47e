"""Exception types shared across the package.

Invalid arguments raise plain ValueError (or DegenerateInputError where the
inputs are structurally unusable rather than merely malformed). The remaining
types signal numerical failure and carry enough state to diagnose it.
"""


class DegenerateInputError(ValueError):
    """Inputs are structurally degenerate (e.g. identically zero data where a
    positive bound is required)."""


class LinearSolverError(RuntimeError):
    """Iterative linear solve failed to reach its tolerance.

    Attributes:
        stats: SolveStats for the failed solve.
    """

    def __init__(self, message, stats=None):
        super().__init__(message)
        self.stats = stats


class StepFailure(RuntimeError):
    """An implicit time step was rejected (Newton divergence or negativity
    beyond tolerance).

    Attributes:
        residual_history: Newton residual norms up to the failure.
        time: simulation time at which the step was attempted.
    """

    def __init__(self, message, residual_history=None, time=None):
        super().__init__(message)
        self.residual_history = list(residual_history or [])
        self.time = time


class MonotoneConvergenceError(RuntimeError):
    """Outer upper/lower iteration hit its iteration cap before the gap
    dropped below tolerance.

    Attributes:
        gaps: sup-norm gap per outer iteration.
    """

    def __init__(self, message, gaps=None):
        super().__init__(message)
        self.gaps = list(gaps or [])


class OracleFailure(RuntimeError):
    """Reference integrator produced NaN/overflow; a smaller oracle step is
    needed."""
