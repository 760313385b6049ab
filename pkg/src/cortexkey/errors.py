"""Exception types shared across the package.

The CLI maps these onto exit codes: DataError -> 2, NumericError -> 3.
"""


class CortexKeyError(Exception):
    """Base class for package-specific failures."""


class DataError(CortexKeyError, ValueError):
    """Malformed bundles, shape/contract violations, bad marker values."""


class NumericError(CortexKeyError, RuntimeError):
    """Numeric failure during training (NaN loss, divergence).

    ``last_good_epoch`` points at the most recent epoch whose weights were
    still finite; the model is left restored to that checkpoint.
    """

    def __init__(self, message: str, last_good_epoch: int | None = None):
        super().__init__(message)
        self.last_good_epoch = last_good_epoch
