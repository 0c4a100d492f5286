"""Exception types shared across solvers and the CLI."""


class SolverError(RuntimeError):
    """An iterative solver failed to converge or broke an invariant."""
