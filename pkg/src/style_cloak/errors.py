"""Exception hierarchy shared across the package."""


class StyleCloakError(Exception):
    """Base class for all package errors."""


class InvalidInputError(StyleCloakError, ValueError):
    """An image or tensor argument has the wrong shape, range or contents."""


class InvalidParameterError(StyleCloakError, ValueError):
    """A scalar knob is out of its allowed range."""


class DecodeError(StyleCloakError, OSError):
    """An image file is missing, unreadable or corrupt."""


class EncoderLoadError(StyleCloakError, OSError):
    """Encoder weights are missing or cannot be loaded."""


class DegenerateStyleError(StyleCloakError, ArithmeticError):
    """A style distance is numerically zero, so its direction is undefined.

    Raised when an image is indistinguishable from its own content image in
    embedding space; protecting it would be vacuous.
    """


class DivergedError(StyleCloakError, ArithmeticError):
    """The optimization produced a non-finite loss."""

    def __init__(self, step: int, message: str | None = None):
        self.step = step
        super().__init__(message or f"non-finite loss at step {step}")
