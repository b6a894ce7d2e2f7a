"""Exception types shared across the package."""


class GazeLexError(Exception):
    """Base class for all errors raised by this package."""


class LayoutError(GazeLexError):
    """Document layout file is malformed or violates an invariant."""


class TraceError(GazeLexError):
    """Gaze trace is malformed or too short for the requested operation."""


class AlignmentError(GazeLexError):
    """Gaze-text alignment could not be performed."""


class ModelError(GazeLexError):
    """Model configuration or tensor shapes are inconsistent."""


class TrainingDiverged(GazeLexError):
    """Training loss became non-finite; carries the last good parameters."""

    def __init__(self, message, params=None, metrics=None):
        super().__init__(message)
        self.params = params
        self.metrics = metrics


class EvalError(GazeLexError):
    """Evaluation protocol could not be applied to the dataset."""


class GenerationError(GazeLexError):
    """Synthetic corpus generation constraints cannot be met."""
