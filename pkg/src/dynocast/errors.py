"""Exception hierarchy shared across the toolkit.

The CLI maps these onto process exit codes, so new error types should
subclass one of the three roots below.
"""


class ConfigError(ValueError):
    """Invalid configuration value or malformed config file."""


class DataError(ValueError):
    """Missing, malformed, or insufficient input data."""


class NumericalError(RuntimeError):
    """Numerical failure: divergence, singularity, or non-finite values."""


class SteeringSingularityError(NumericalError):
    """Steering angle at or beyond the tangent singularity (|delta| >= pi/2)."""


class NonFiniteError(NumericalError):
    """A computation produced NaN or infinity."""


class TrainingDivergedError(NumericalError):
    """Training loss became non-finite.

    Carries the last finite parameter snapshot so callers can recover it.
    """

    def __init__(self, message, last_good_params=None, epoch=None):
        super().__init__(message)
        self.last_good_params = last_good_params
        self.epoch = epoch
