"""Exception types shared across the simulator."""


class InvalidArgument(ValueError):
    """Bad input: a precondition, config value or bracket is not acceptable."""


class NumericalError(ArithmeticError):
    """A solve failed or a field stopped being finite.

    ``state`` carries the last valid state when the failure happened inside a
    time stepper, so callers can report where the run stopped.
    """

    def __init__(self, message, state=None):
        super().__init__(message)
        self.state = state


class BlowupSuspected(NumericalError):
    """A step produced non-finite values or crossed the density ceiling."""


class CFLViolation(InvalidArgument):
    """The requested step exceeds the advective stability bound."""

    def __init__(self, message, dt_max):
        super().__init__(message)
        self.dt_max = dt_max
