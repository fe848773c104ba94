"""Exception types shared across the toolkit."""


class AubryMatherError(Exception):
    """Base class for all toolkit errors."""


class UsageError(AubryMatherError):
    """Invalid arguments or configuration (caller mistake, exit code 1)."""


class CoercivityWindowError(AubryMatherError):
    """A generating-function query left the coercivity window |x' - x| <= window.

    Signals a non-coercive query: the caller must reduce the lift gap.
    """

    def __init__(self, gap: float, window: float):
        self.gap = float(gap)
        self.window = float(window)
        super().__init__(
            f"lift gap |x'-x| = {abs(self.gap):g} exceeds coercivity window {self.window:g}"
        )


class MomentumRangeError(AubryMatherError):
    """The momentum lies outside the range of -d1h over the coercivity window."""

    def __init__(self, x: float, y: float, step: int | None = None):
        self.x = float(x)
        self.y = float(y)
        self.step = step
        where = f" at orbit step {step}" if step is not None else ""
        super().__init__(f"no root x' with |x'-x| <= window for y = {self.y:g}{where}")


class NumericalFailure(AubryMatherError):
    """An iterative solve did not converge; carries the best iterate found."""

    def __init__(self, message: str, best=None):
        self.best = best
        super().__init__(message)
