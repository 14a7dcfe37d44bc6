"""
TKGE Errors
Exception hierarchy raised by the services; the command layer maps them to exit codes.
"""
from typing import List, Optional


class TKGError(Exception):
    """Base class for all engine failures (exit code 1)."""


class DateParseError(TKGError):
    """A date field could not be parsed."""

    def __init__(self, field: str, value: str):
        self.field = field
        self.value = value
        super().__init__(f"invalid date in field '{field}': {value!r} (expected YYYY-MM-DD)")


class FormatError(TKGError):
    """A dataset line is malformed."""

    def __init__(self, line_no: int, message: str):
        self.line_no = line_no
        super().__init__(f"line {line_no}: {message}")


class SplitOverlapError(TKGError):
    """The same quadruple appears in more than one split."""

    def __init__(self, duplicates: List[tuple]):
        self.duplicates = duplicates
        shown = ", ".join(str(d) for d in duplicates[:10])
        more = f" (+{len(duplicates) - 10} more)" if len(duplicates) > 10 else ""
        super().__init__(f"split overlap: {len(duplicates)} quadruple(s) in both splits: {shown}{more}")


class SplitError(TKGError):
    """The dataset cannot be split as requested."""


class VocabularyError(TKGError):
    """Unknown id or surface string."""

    def __init__(self, message: str, suggestions: Optional[List[str]] = None):
        self.suggestions = suggestions or []
        if self.suggestions:
            message = f"{message}; did you mean: {', '.join(repr(s) for s in self.suggestions)}"
        super().__init__(message)


class CheckpointError(TKGError):
    """Checkpoint missing, corrupted or incompatible with the dataset."""


class NonFiniteGradientError(TKGError):
    """A gradient contains NaN or Inf."""

    def __init__(self, tensor_name: str):
        self.tensor_name = tensor_name
        super().__init__(f"non-finite gradient in tensor '{tensor_name}'")


class DivergenceError(TKGError):
    """Training loss became non-finite; carries the last finite parameter state."""

    def __init__(self, epoch: int, last_state: dict):
        self.epoch = epoch
        self.last_state = last_state
        super().__init__(f"training diverged at epoch {epoch} (loss is not finite)")


class EmptyEvaluationError(TKGError):
    """Evaluation requested on an empty query set."""


class ForecastError(TKGError):
    """Forecast inputs are invalid."""


class ConfigurationError(TKGError):
    """Hyperparameters are inconsistent (e.g. an empty temporal part)."""
