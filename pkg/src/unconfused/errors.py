"""Exception hierarchy shared across the package."""


class UnconfusedError(Exception):
    """Base class for every error raised by this package."""


class DimensionMismatchError(UnconfusedError):
    """Operands have incompatible shapes."""


class SingularMatrixError(UnconfusedError):
    """Matrix inversion hit a pivot below the singularity threshold."""


class InvalidConfusionError(UnconfusedError):
    """A confusion matrix failed validation (entries, column sums, conditioning)."""


class MissingLabelsError(UnconfusedError):
    """An operation required labels that are absent from the dataset."""


class GenerationStalledError(UnconfusedError):
    """Rejection sampling or matrix resampling stopped making progress."""


class NoViableCandidateError(UnconfusedError):
    """Every update candidate norm is at or below the stopping threshold."""


class EmptyTestSetError(UnconfusedError):
    """Evaluation was asked to run on an empty dataset."""


class InvalidQueryError(UnconfusedError):
    """A bound query lies outside the valid parameter domain."""


class DatasetFormatError(UnconfusedError):
    """Dataset content violates the documented contract. Errors raised while
    loading a file carry the offending path and line number."""

    def __init__(self, message, path=None, line_no=None):
        if path is not None:
            message = f"{path}:{line_no}: {message}"
        super().__init__(message)
        self.path = None if path is None else str(path)
        self.line_no = line_no

    @classmethod
    def at(cls, path, line_no, message):
        return cls(message, path=path, line_no=line_no)


class ConfigError(UnconfusedError):
    """Experiment configuration is malformed or inconsistent."""
