"""
Exception hierarchy for chirppose

Every error raised on purpose by the package derives from ChirpPoseError, so
callers (and the CLI) can tell library failures apart from programming bugs.
"""
from typing import Optional


class ChirpPoseError(Exception):
    """Base class for all chirppose errors"""


class ConfigError(ChirpPoseError, ValueError):
    """Invalid configuration value or combination"""


class PoseRangeError(ChirpPoseError, ValueError):
    """Pose coordinate outside the normalized [0, 1] range"""


class PayloadError(ChirpPoseError, ValueError):
    """Payload values do not match the frame type"""


class MalformedFrameError(PayloadError):
    """Symbol count of a received frame does not match its header"""


class SymbolError(ChirpPoseError, ValueError):
    """Symbol value or symbol sample count out of range"""


class NeedMoreData(ChirpPoseError):
    """The requested analysis window extends past the available samples"""

    def __init__(self, needed: int, available: int):
        super().__init__(f"need {needed} samples, only {available} available")
        self.needed = needed
        self.available = available


class ShapeError(ChirpPoseError, ValueError):
    """Array dimensions do not match what a model expects"""


class TrainingDivergedError(ChirpPoseError, RuntimeError):
    """Training produced a non-finite loss"""

    def __init__(self, epoch: int, batch: int, last_finite_loss: Optional[float]):
        super().__init__(
            f"non-finite loss at epoch {epoch}, batch {batch} "
            f"(last finite loss: {last_finite_loss})"
        )
        self.epoch = epoch
        self.batch = batch
        self.last_finite_loss = last_finite_loss


class ModelFormatError(ChirpPoseError, ValueError):
    """Model file cannot be parsed"""


class ModelVersionError(ModelFormatError):
    """Model file was written with an unsupported format version"""


class ExternalToolError(ChirpPoseError, RuntimeError):
    """External codec command is missing or failed"""


class UndefinedMetricError(ChirpPoseError, ValueError):
    """Metric is undefined for the given inputs"""


class StageError(ChirpPoseError, RuntimeError):
    """A pipeline stage failed; `stage` names it"""

    def __init__(self, stage: str, cause: BaseException):
        super().__init__(f"stage '{stage}' failed: {cause}")
        self.stage = stage
        self.cause = cause


class DegenerateDataError(ChirpPoseError, ValueError):
    """Training data carries no information (e.g. all rows identical)"""
