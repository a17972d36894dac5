"""Exception hierarchy shared by all modules."""


class HJBLabError(Exception):
    """Base class for every error raised by this package."""


class AdmissibilityError(HJBLabError, ValueError):
    pass


class SingularDiffusionError(HJBLabError, ArithmeticError):
    pass


class BlowupError(HJBLabError, FloatingPointError):
    pass


class StepTooSmallError(HJBLabError, ValueError):
    pass


class StabilityError(HJBLabError, RuntimeError):
    pass


class DimensionError(HJBLabError, ValueError):
    pass


class MissingGradientError(HJBLabError, ValueError):
    pass


class QuadratureError(HJBLabError, ArithmeticError):
    pass


class NoContractionError(HJBLabError, RuntimeError):
    pass


class MaxIterError(HJBLabError, RuntimeError):
    pass


class ContinuationError(HJBLabError, RuntimeError):
    """Backward continuation stalled on a window.

    Attributes
    ----------
    window : tuple of float
        The ``(start, end)`` of the failing window.
    profile : list of (float, float)
        ``(t, (T - t)^{1/2} sup|G grad v(t)|)`` pairs collected so far.
    """

    def __init__(self, message, window=None, profile=None):
        super().__init__(message)
        self.window = window
        self.profile = profile or []


class ExtrapolationError(HJBLabError, ValueError):
    pass


class IllConditionedBasisError(HJBLabError, ArithmeticError):
    pass


class DegenerateWeightsError(HJBLabError, ArithmeticError):
    pass


class ConfigError(HJBLabError, ValueError):
    """Invalid experiment configuration; ``path`` names the offending key."""

    def __init__(self, message, path=""):
        super().__init__(f"{path}: {message}" if path else message)
        self.path = path


class MissingReportError(HJBLabError, FileNotFoundError):
    pass
