"""Exception hierarchy shared by every stage of the pipeline."""


class WavebandError(Exception):
    """Base class for all package errors."""


class DimensionError(WavebandError, ValueError):
    pass


class GridError(WavebandError, ValueError):
    """Raised for off-grid times, bad partitions or mismatched grids."""


class CoverageError(WavebandError, ValueError):
    """The potential does not cover the spatial range the computation needs."""


class HermitianError(WavebandError, ValueError):
    pass


class ConfigurationError(WavebandError, ValueError):
    pass


class DefectFrameError(WavebandError):
    """No square-summable solution basis could be selected."""


class DegeneracyError(WavebandError):
    """A matrix that must be invertible is numerically singular."""


class TruncationError(WavebandError):
    """Input functions do not decay by the truncation point."""


class NestViolationError(WavebandError):
    """A projection family is not monotone."""


class PolarError(WavebandError):
    pass


class NotPSDError(WavebandError):
    pass


class FactorizationError(WavebandError):
    pass


class ModelError(WavebandError):
    pass


class RecoveryRejected(WavebandError):
    """Recovered potential failed its decomposability certificate."""

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report
