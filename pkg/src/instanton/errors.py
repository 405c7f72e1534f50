"""Solver exceptions."""


class SolverError(RuntimeError):
    """Base class for integration failures."""


class BlowupError(SolverError):
    """The forward state left the representable range (inf/nan or huge)."""

    def __init__(self, step: int, time: float, what: str = "forward state"):
        self.step = step
        self.time = time
        super().__init__(f"{what} blew up at step {step} (t = {time:.6g})")


class FixedPointError(SolverError):
    """The damped fixed-point iteration of an implicit step did not converge."""

    def __init__(self, step: int, residual: float, iterations: int):
        self.step = step
        self.residual = residual
        super().__init__(
            f"implicit step {step} not converged after {iterations} iterations "
            f"(residual {residual:.3e})"
        )
