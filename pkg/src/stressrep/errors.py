"""Exception hierarchy shared across the package."""


class StressRepError(Exception):
    """Base class for all package errors."""


class AudioError(StressRepError):
    pass


class WavNotFoundError(AudioError, FileNotFoundError):
    pass


class MalformedWavError(AudioError, ValueError):
    pass


class UnsupportedWavError(AudioError, ValueError):
    pass


class SignalTooShortError(StressRepError, ValueError):
    pass


class SchemaMismatchError(StressRepError, ValueError):
    pass


class ConfigError(StressRepError, ValueError):
    pass


class DataError(StressRepError, ValueError):
    """Input data violates a precondition (too few speakers, single class, ...)."""


class NumericalError(StressRepError, FloatingPointError):
    """Raised when a loss or gradient turns non-finite."""


class CheckpointError(StressRepError, ValueError):
    pass
