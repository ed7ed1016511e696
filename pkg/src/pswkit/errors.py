"""Exception hierarchy.

The CLI maps each family to an exit code: configuration problems exit 2,
data problems exit 3, fitting/estimation failures exit 4.
"""


class PswError(Exception):
    """Base class for all errors raised by pswkit."""

    kind = "error"


class ConfigError(PswError, ValueError):
    kind = "config"


class FormulaError(ConfigError):
    kind = "formula"


class DataError(PswError, ValueError):
    kind = "data"


class FitError(PswError, RuntimeError):
    kind = "fit"


class ConvergenceError(FitError):
    kind = "convergence"


class RankDeficientError(FitError):
    kind = "rank"


class EstimationError(FitError):
    """Numerical failure downstream of the model fits (zero weight, log of a
    non-positive mean, singular bread matrix, too many failed bootstrap draws)."""

    kind = "estimation"
