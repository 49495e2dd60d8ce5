"""Exception types shared across the package."""


class FaceVoiceError(Exception):
    """Base class for every error raised by this package."""


class InvalidArgumentError(FaceVoiceError, ValueError):
    """An argument violates an operation's precondition."""


class ShapeError(FaceVoiceError, ValueError):
    """Array dimensions do not conform."""


class DegenerateInputError(FaceVoiceError, ValueError):
    """A vector is too close to zero to normalize or compare by angle."""


class NumericFailureError(FaceVoiceError, RuntimeError):
    """NaN or Inf appeared where finite values are required."""


class DatasetFormatError(FaceVoiceError, ValueError):
    """A dataset directory or trial file is malformed."""
