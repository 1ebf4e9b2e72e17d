"""Exception types raised across freqreg.

Every error derives from a built-in so callers that only know about
ValueError / RuntimeError keep working. The CLI turns any of these into
exit status 1.
"""


class FreqRegError(Exception):
    """Marker base for errors raised deliberately by this package."""


class ConfigError(FreqRegError, ValueError):
    """Invalid or inconsistent experiment configuration."""


class ShapeError(FreqRegError, ValueError):
    """Tensor or image shapes do not satisfy an operation's shape rule."""


class DomainError(FreqRegError, ValueError):
    """Input outside an operation's mathematical domain (e.g. log of x <= 0)."""


class NonFiniteError(FreqRegError, FloatingPointError):
    """A forward op produced NaN or Inf."""


class TapeError(FreqRegError, RuntimeError):
    """Misuse of a gradient tape (consumed twice, non-scalar loss, ...)."""


class IdxFormatError(FreqRegError, ValueError):
    """Malformed IDX container."""


class PpmFormatError(FreqRegError, ValueError):
    """Malformed PPM (P6) file."""


class EmptyDatasetError(FreqRegError, ValueError):
    """A dataset (or image) that must be non-empty is empty."""


class CheckpointError(FreqRegError, ValueError):
    """Checkpoint is unreadable or does not match the model it is loaded into."""


class FrequencyMismatchError(FreqRegError, ValueError):
    """Scoring with a frequency config different from the model's training config."""


class TrainingDivergedError(FreqRegError, RuntimeError):
    """Training loss became non-finite."""

    def __init__(self, epoch: int, batch: int, loss: float):
        self.epoch = epoch
        self.batch = batch
        self.loss = loss
        super().__init__(
            f"non-finite training loss {loss!r} at epoch {epoch}, batch {batch}"
        )
