"""Exception types shared across the package."""


class SolverError(RuntimeError):
    """A root solve did not reach its residual tolerance.

    Attributes
    ----------
    residual : float
        Largest residual |F(w) - z| seen among the failed points.
    """

    def __init__(self, message, residual=float("nan")):
        super().__init__(f"{message} (last residual {residual:.3e})")
        self.residual = float(residual)


class QuadratureError(RuntimeError):
    """An adaptive quadrature ran out of refinement budget."""

    def __init__(self, message, estimate=float("nan")):
        super().__init__(f"{message} (error estimate {estimate:.3e})")
        self.estimate = float(estimate)


class CollisionError(RuntimeError):
    """Particle sub-stepping hit its minimum step without restoring order."""
