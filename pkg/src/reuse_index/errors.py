"""Exception hierarchy shared by every module of the package."""


class ReuseIndexError(Exception):
    """Base class for all package errors."""


class DomainError(ReuseIndexError, ValueError):
    """An operation was called outside its domain (empty input, bad parameter)."""


class TrainingError(ReuseIndexError):
    """Gradient descent produced a non-finite loss."""

    def __init__(self, message, epoch=None, entry_id=None):
        super().__init__(message)
        self.epoch = epoch
        self.entry_id = entry_id


class PoolFormatError(ReuseIndexError):
    """A pool file is malformed (bad magic, bad model kind, inconsistent fields)."""


class PoolVersionError(PoolFormatError):
    """A pool file declares a format version this build cannot read."""


class PoolTruncatedError(PoolFormatError):
    """A pool file ended before all declared entries were read."""


class SosdError(ReuseIndexError):
    """Base class for SOSD key-file errors."""


class SosdUnsortedError(SosdError):
    pass


class SosdCountMismatchError(SosdError):
    pass


class SosdTruncatedError(SosdError):
    pass


class CorrectnessError(ReuseIndexError):
    """An index answered a lookup differently from the binary-search oracle."""

    def __init__(self, message, sample=()):
        super().__init__(message)
        self.sample = list(sample)
