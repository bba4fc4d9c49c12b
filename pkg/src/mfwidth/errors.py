"""Exception hierarchy shared by every stage of the pipeline."""


class MFWidthError(Exception):
    """Base class for all errors raised by :mod:`mfwidth`."""


class ValidationError(MFWidthError, ValueError):
    """Inputs or configuration violate a documented precondition."""


class AnalysisError(MFWidthError):
    """The numerics could not produce a defined result for this input."""


# series / profile
class NonFinite(ValidationError):
    pass


class TooShort(ValidationError):
    pass


class ZeroVariance(AnalysisError):
    pass


# segmentation and detrending
class BadScale(ValidationError):
    pass


class DegenerateFit(ValidationError):
    pass


class AllZeroSegments(AnalysisError):
    pass


# regression
class InsufficientScales(AnalysisError):
    pass


class NonPositiveFluctuation(AnalysisError):
    pass


# spectrum width
class WidthError(AnalysisError):
    """Quadratic width is undefined; ``spectrum`` holds the points anyway."""

    def __init__(self, message, spectrum=None):
        super().__init__(message)
        self.spectrum = spectrum


class ParabolaUpward(WidthError):
    pass


class NoRealRoots(WidthError):
    pass


# generators
class BadParam(ValidationError):
    pass


# audio
class AudioError(MFWidthError):
    pass


class NotWav(AudioError):
    pass


class UnsupportedCodec(AudioError):
    pass


class TruncatedData(AudioError):
    pass


class ClipOutOfRange(ValidationError):
    pass


class BadFactor(ValidationError):
    pass


# reporting
class UnknownArtist(MFWidthError, KeyError):
    pass


class ReferenceIntegrityError(MFWidthError):
    pass
