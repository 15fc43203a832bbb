"""
Exception hierarchy shared by every pipeline app.

Each class carries the process exit code the management commands report:
0 success, 1 usage, 2 data error, 3 internal.
"""


class PipelineError(Exception):
    """Base class; anything not more specific is an internal failure."""

    exit_code = 3


class UsageError(PipelineError):
    exit_code = 1


class ConfigError(UsageError):
    """Invalid or unknown run configuration key/value."""


class DataError(PipelineError):
    exit_code = 2


class CorpusReadError(DataError):
    """The corpus stream could not be read at all."""


class KbLoadError(DataError):
    """Missing snapshot file or a dangling reference inside it."""

    def __init__(self, message: str, path=None, line_no: int = None):
        self.path = path
        self.line_no = line_no
        location = ""
        if path is not None:
            location = f" ({path}" + (f", line {line_no}" if line_no else "") + ")"
        super().__init__(f"{message}{location}")


class SchemaMismatchError(DataError):
    """Feature vector arity or names differ from the model's schema."""


class TrainingError(DataError):
    """Training data cannot produce a model (single class, too few examples)."""


class EvaluationError(DataError):
    """Gold standard is empty or malformed."""
