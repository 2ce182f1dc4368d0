"""Exception hierarchy shared by all msalab modules."""


class MSALabError(Exception):
    """Base class for every error raised by msalab."""


class InvalidSize(MSALabError, ValueError):
    pass


class UnknownVertex(MSALabError, KeyError):
    pass


class EmptyBoundary(MSALabError, ValueError):
    pass


class InvalidDomain(MSALabError, ValueError):
    pass


class InvalidGeometry(MSALabError, ValueError):
    pass


class NearSpectrum(MSALabError, ArithmeticError):
    """Energy lies within the resolvent tolerance of the spectrum."""

    def __init__(self, energy, gap, tolerance):
        self.energy = energy
        self.gap = gap
        self.tolerance = tolerance
        super().__init__(
            f"E={energy!r} is within {gap:.3e} of the spectrum (tolerance {tolerance:.3e})"
        )


class NumericalFailure(MSALabError, ArithmeticError):
    """Eigendecomposition failed its residual/orthonormality checks.

    ``dump`` holds the offending matrix, row-major, 17 significant digits.
    """

    def __init__(self, message, dump=""):
        self.dump = dump
        super().__init__(message)


class DegenerateScale(MSALabError, ValueError):
    pass


class HypothesisFailure(MSALabError, ValueError):
    pass


class ScheduleInfeasible(MSALabError, ValueError):
    def __init__(self, message, failing_side):
        self.failing_side = failing_side
        super().__init__(message)


class InsufficientData(MSALabError, ValueError):
    pass


class Unsupported(MSALabError, NotImplementedError):
    pass


class ConfigError(MSALabError, ValueError):
    pass
