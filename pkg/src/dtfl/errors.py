"""Exception types shared by the solver, cost model and experiment layer."""


class InfeasibleError(ValueError):
    """A constraint set has no feasible point.

    ``client`` names the offending client (when one can be named) and
    ``constraint`` the binding constraint, e.g. ``"deadline"`` or ``"f_max"``.
    """

    def __init__(self, message, client=None, constraint=None):
        super().__init__(message)
        self.client = client
        self.constraint = constraint


class ConvergenceError(RuntimeError):
    """An iterative method hit its iteration cap; ``trace`` holds the history."""

    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = trace
