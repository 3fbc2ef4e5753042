"""Exception types shared across the package."""


class VhjError(RuntimeError):
    """Runtime failure of a solver or estimator (as opposed to bad input)."""


class SolverAbort(VhjError):
    """A time integration produced non-finite values and was aborted."""


class RegimeError(VhjError):
    """An experiment was requested outside the parameter regime it is valid for."""
