"""Exceptions raised by recrl."""


class RecRLError(Exception):
    """Base class of every recrl error."""


class ShapeError(RecRLError, ValueError):
    """Array shapes are inconsistent with an operation."""


class IndexLookupError(RecRLError, IndexError):
    """An item id or row index is outside the table."""


class NumericError(RecRLError, ArithmeticError):
    """A non-finite value reached a place that requires finite numbers.

    Attributes
    ----------
    batch: optional
        The training batch that produced the value, when raised by the trainer.
    """

    def __init__(self, message: str, batch: object = None) -> None:
        super().__init__(message)
        self.batch = batch


class GradientError(RecRLError, RuntimeError):
    """Backward was requested on something that cannot be differentiated."""


class DataFormatError(RecRLError, ValueError):
    """Malformed input data or cache file."""


class EmptyDatasetError(DataFormatError):
    """Nothing is left after filtering, or an empty split was requested."""


class NegativeSamplingError(RecRLError, ValueError):
    """Not enough eligible items to draw negative actions from."""


class ConfigError(RecRLError, ValueError):
    """Invalid configuration value or key."""


class ConfigMismatchError(ConfigError):
    """A checkpoint was produced under a different configuration."""


class CheckpointError(RecRLError, ValueError):
    """Unreadable checkpoint or incompatible parameter manifest."""
