"""Exception types raised by anomalyscan."""


class AnomalyScanError(Exception):
    """Base class for all errors raised by this package."""


class DataValidationError(AnomalyScanError, ValueError):
    """Input data violates a schema or invariant.

    ``line`` carries the 1-based line number of the offending CSV row when
    the error comes from a file loader.
    """

    def __init__(self, message, line=None, path=None):
        self.line = line
        self.path = path
        prefix = ""
        if path is not None:
            prefix += f"{path}: "
        if line is not None:
            prefix += f"line {line}: "
        super().__init__(prefix + message)


class DuplicateCellError(DataValidationError):
    pass


class OrderingError(DataValidationError):
    pass


class EmptyIntersectionError(AnomalyScanError, ValueError):
    pass


class TooFewStocksError(AnomalyScanError):
    pass


class DegenerateInputError(AnomalyScanError, ValueError):
    """Series is constant, too short, or otherwise carries no information."""


class RankDeficiencyError(AnomalyScanError, ValueError):
    def __init__(self, column):
        self.column = column
        super().__init__(f"design matrix is rank deficient: column {column!r} "
                         "is collinear with preceding columns")


class EmptyBucketError(AnomalyScanError, ValueError):
    pass


class DegenerateRegimeError(AnomalyScanError, ValueError):
    pass


class ConfigError(AnomalyScanError, ValueError):
    pass


class ConvergenceWarning(UserWarning):
    pass


class EligibilityError(AnomalyScanError):
    """A portfolio member lacks a holding-month return (internal invariant breach)."""
