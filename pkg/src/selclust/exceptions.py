"""Exception hierarchy.

Every error carries a stable ``code`` string and the process exit code the
command line uses when the error escapes a command.
"""


class SelclustError(Exception):
    code = "error"
    exit_code = 1


class ConfigError(SelclustError, ValueError):
    code = "config_error"
    exit_code = 2


class DataError(SelclustError, ValueError):
    code = "data_error"
    exit_code = 3


class InvalidPairError(DataError):
    code = "invalid_pair"


class InvalidContrastError(DataError):
    code = "invalid_contrast"


class NotPositiveDefiniteError(DataError):
    code = "not_positive_definite"


class NumericalError(SelclustError, ArithmeticError):
    code = "numerical_error"
    exit_code = 4


class DegenerateDirectionError(NumericalError):
    """The two cluster means coincide, so the mean-difference direction is undefined."""

    code = "degenerate_direction"


class DegenerateSupportError(NumericalError):
    code = "degenerate_support"


class UnstableEstimateError(NumericalError):
    """No Monte Carlo draw reproduced the tested clusters.

    ``diagnostics`` holds the sample count, the number of non-negative draws
    and the number of draws that preserved the pair.
    """

    code = "unstable_estimate"

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = dict(diagnostics or {})
