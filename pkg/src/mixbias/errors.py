"""Exception hierarchy shared by all mixbias modules."""


class MixBiasError(Exception):
    """Base class for every error raised by this package."""


class InvalidInput(MixBiasError, ValueError):
    pass


class NumericalFailure(MixBiasError, ArithmeticError):
    pass


class NotEstimable(MixBiasError, ValueError):
    """The requested linear function is not estimable under the design."""


class DegenerateModel(MixBiasError, ValueError):
    """No residual degrees of freedom are left for variance estimation."""


class UnsupportedCovariance(MixBiasError, ValueError):
    """Random-effects covariance is not equicorrelated within factors."""


class SimulationUnstable(MixBiasError, RuntimeError):
    """Too many simulation replicates failed to fit."""


class ParseError(MixBiasError, ValueError):
    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class EmptyDesign(MixBiasError, ValueError):
    """No usable (non-neutral) games remain after filtering."""
