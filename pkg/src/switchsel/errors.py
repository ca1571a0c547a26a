"""Exception hierarchy shared by all modules."""


class SwitchSelError(Exception):
    """Base class for every error raised by this package."""


class EmptySample(SwitchSelError, ValueError):
    pass


class UndefinedMLE(SwitchSelError, ValueError):
    """The average sufficient statistic lies on or outside the mean-space boundary."""


class NonFiniteLoss(SwitchSelError, ArithmeticError):
    pass


class InvalidObservation(SwitchSelError, ValueError):
    """Observation outside the support of the family."""


class NumericUnderflow(SwitchSelError, ArithmeticError):
    pass


class GridTooCoarse(SwitchSelError, ArithmeticError):
    """Quadrature refinement hit the node cap before converging."""


class MismatchedN(SwitchSelError, ValueError):
    pass


class NTooSmall(SwitchSelError, ValueError):
    pass


class NotAnytimeValid(SwitchSelError, TypeError):
    """The criterion does not yield a test that is valid under optional stopping."""


class ConfigError(SwitchSelError, ValueError):
    pass
