"""Exception types shared across the package."""


class AdaptSiamError(Exception):
    """Base class for all package errors."""


class InvalidBoxError(AdaptSiamError, ValueError):
    pass


class ShapeMismatchError(AdaptSiamError, ValueError):
    pass


class ImageTooSmallError(AdaptSiamError, ValueError):
    pass


class InsufficientDataError(AdaptSiamError, ValueError):
    pass


class DivergenceError(AdaptSiamError, RuntimeError):
    """Raised when a training loss becomes non-finite."""


class CalibrationError(AdaptSiamError, ValueError):
    pass


class TemplateBufferError(AdaptSiamError, RuntimeError):
    """Template buffer misuse, e.g. revoking with nothing pending."""


class DatasetFormatError(AdaptSiamError, ValueError):
    """Malformed dataset file; message names the file and line or field."""


class CheckpointError(AdaptSiamError, ValueError):
    pass
