"""Exception hierarchy shared by all mimcool modules."""


class MimcoolError(Exception):
    """Base class for all package errors."""


class ParameterError(MimcoolError, ValueError):
    """A physical parameter is outside its allowed domain."""


class StabilityError(MimcoolError):
    """A configuration is dynamically unstable (net anti-damping)."""


class UnitsError(MimcoolError, TypeError):
    """Spectrum units tag incompatible with the requested operation."""


class CalibrationError(MimcoolError):
    """A calibration procedure produced an unusable result."""


class FitError(MimcoolError):
    """Nonlinear fit failed (non-convergence or rank deficiency).

    Carries the last iterate so callers can inspect what went wrong.
    """

    def __init__(self, message, last_params=None, residual_norm=None):
        super().__init__(message)
        self.last_params = last_params
        self.residual_norm = residual_norm


class RankDeficiencyError(FitError):
    """The regression design matrix is rank deficient (degenerate data)."""


class ConfigError(MimcoolError):
    """Configuration file problem, with position information when known."""

    def __init__(self, message, path=None, line=None):
        where = ""
        if path is not None:
            where = f"{path}:" + (f"{line}: " if line is not None else " ")
        super().__init__(where + message)
        self.path = path
        self.line = line


class ResolutionWarning(UserWarning):
    """Frequency grid is marginal for the requested spectral operation."""


class AccuracyWarning(UserWarning):
    """Result may be degraded (e.g. spectral power near the grid edge)."""
