"""Exception hierarchy.

Every error raised by the package derives from :class:`WindGainError`, and
each carries an ``exit_code`` the command-line front end uses verbatim.
"""

from __future__ import annotations


class WindGainError(Exception):
    exit_code = 1


# -- input / dataset ----------------------------------------------------------
class DataError(WindGainError):
    exit_code = 4


class MalformedTimestamp(DataError):
    def __init__(self, row, value):
        super().__init__(f"unparseable timestamp {value!r} at row {row}")
        self.row = row
        self.value = value


class DuplicateTimestamp(DataError):
    def __init__(self, timestamp):
        super().__init__(f"duplicate timestamp {timestamp}")
        self.timestamp = timestamp


class CadenceMismatch(DataError):
    pass


class EmptyPeriod(DataError):
    def __init__(self, period):
        super().__init__(f"no usable records in period {period}")
        self.period = period


class ConstantColumn(DataError):
    def __init__(self, column):
        super().__init__(f"covariate column {column!r} is constant on the training rows")
        self.column = column


# -- numerical / analysis -----------------------------------------------------
class AnalysisError(WindGainError):
    exit_code = 5


class DimensionMismatch(AnalysisError):
    pass


class SaturatedSmoother(AnalysisError):
    """tr(I - M) vanished: the smoother interpolates the training data."""


class NoAdmissibleK(AnalysisError):
    pass


class TooFewRecords(AnalysisError):
    pass


class EmptyPredictionSet(AnalysisError):
    pass


class DegenerateDenominator(AnalysisError):
    pass


class BinWidthMismatch(AnalysisError):
    pass


class NonpositiveAEP(AnalysisError):
    pass


class ReplicateFailure(AnalysisError):
    def __init__(self, replicate, reason):
        super().__init__(f"bootstrap replicate {replicate} failed: {reason}")
        self.replicate = replicate
        self.reason = reason


class BootstrapInsufficient(AnalysisError):
    pass


class InvalidScenario(WindGainError):
    exit_code = 2


# -- configuration / orchestration -------------------------------------------
class ConfigError(WindGainError):
    exit_code = 2


class ManifestMissing(WindGainError):
    exit_code = 6
