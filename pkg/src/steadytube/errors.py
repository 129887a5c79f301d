"""Exception types raised by steadytube."""


class SteadyTubeError(Exception):
    """Base class for all library errors."""


class DomainError(SteadyTubeError, ValueError):
    """A state lies outside the domain of definition of a system."""


class ParameterError(SteadyTubeError, ValueError):
    """Invalid constitutive or solver parameters."""


class ConstraintUnsolvable(SteadyTubeError, RuntimeError):
    """The hyperbolic constraint f_I(U) = const could not be solved for U_I."""


class SpectralConditionError(SteadyTubeError, ArithmeticError):
    """The linear shooting map is singular (an eigenvalue sits on 2*pi*i*Z)."""

    def __init__(self, message, eigenvalue=None):
        super().__init__(message)
        self.eigenvalue = eigenvalue


class ShootingFailure(SteadyTubeError, RuntimeError):
    """The shooting ODE did not reach x = 1 (blow-up or domain exit)."""

    def __init__(self, message, status=None, x_stop=None):
        super().__init__(message)
        self.status = status
        self.x_stop = x_stop


class ConvergenceError(SteadyTubeError, RuntimeError):
    """An iterative solver exhausted its budget."""

    def __init__(self, message, last=None, info=None):
        super().__init__(message)
        self.last = last
        self.info = info or {}
