"""Exception types shared across the package."""


class LZError(Exception):
    """Base class for errors raised by :mod:`lzmeasure`."""


class InvalidInputError(LZError, ValueError):
    """An argument is outside the domain of the requested operation."""


class InvalidIntervalError(InvalidInputError):
    """A time segment was given with its endpoints in the wrong order."""


class ConvergenceError(LZError, RuntimeError):
    """The ODE integrator could not meet its tolerance.

    ``step_size`` is the last accepted step size and ``t`` the time reached.
    """

    def __init__(self, message, step_size=None, t=None):
        super().__init__(message)
        self.step_size = step_size
        self.t = t
