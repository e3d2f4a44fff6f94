"""Exception types shared across the package."""


class ValidationError(ValueError):
    """Input data violates a structural requirement (shape, definiteness, ...)."""


class LMIInfeasible(Exception):
    """The dissipativity LMI could not be certified.

    Carries the best margin and the (P, S) diagonals that achieved it so
    callers can report how close the search came.
    """

    def __init__(self, margin, p_diag=None, s_diag=None, message=None):
        self.margin = float(margin)
        self.p_diag = p_diag
        self.s_diag = s_diag
        super().__init__(message or f"LMI infeasible: best margin {self.margin:.3e}")


class NumericalError(RuntimeError):
    """A linear solve or factorization failed during a computation."""
