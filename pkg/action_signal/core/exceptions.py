"""Custom exceptions for action-signal."""

from typing import Any, Dict, Optional


class ActionSignalError(Exception):
    """Base exception for action-signal errors."""

    pass


class ConfigurationError(ActionSignalError):
    """Error in a run configuration."""

    pass


class DataValidationError(ActionSignalError):
    """Input data violates a documented invariant."""

    pass


class UnknownChannelError(ActionSignalError):
    """Channel identifier not present in normalization statistics."""

    def __init__(self, channel: str):
        super().__init__(f"unknown channel: {channel}")
        self.channel = channel


class SplitError(ActionSignalError):
    """Invalid cohort split request."""

    pass


class HorizonOutOfRangeError(ActionSignalError):
    """Prediction window extends past the end of a trajectory."""

    pass


class EventsOutOfOrderError(ActionSignalError):
    """Measurement events are not sorted by time within a patient."""

    pass


class EmptyDatasetError(ActionSignalError):
    """No records could be assembled for a dataset."""

    pass


class ShapeMismatchError(ActionSignalError):
    """Tensor shape does not match the model configuration."""

    pass


class SequenceTooLongError(ActionSignalError):
    """History longer than the model's context window."""

    pass


class DivergenceError(ActionSignalError):
    """Training produced a non-finite loss."""

    def __init__(self, message: str = "divergence detected", dump: Optional[Dict[str, Any]] = None):
        super().__init__(message)
        self.dump = dump or {}


class NormalizationMismatchError(ActionSignalError):
    """Model and records were scaled with different statistics."""

    pass


class StageError(ActionSignalError):
    """A pipeline stage failed."""

    pass


class ResultsNotFoundError(StageError):
    """Report requested without stored results."""

    pass
