"""Exception hierarchy shared across the package."""


class OcMusicError(Exception):
    """Base class for all package errors."""


class DecodeError(OcMusicError):
    """Malformed or truncated WAV/MIDI bytes."""


class UnsupportedFormatError(DecodeError):
    """Well-formed container carrying a codec or layout we do not read."""


class ManifestError(OcMusicError):
    """Manifest validation failure, positioned at a 1-based line number."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class EmptyInputError(OcMusicError):
    """An operation received no data to work on."""


class TooShortError(OcMusicError):
    """Audio shorter than one analysis frame."""


class ConfigurationError(OcMusicError):
    """Invalid parameter combination."""


class UndefinedFeatureError(OcMusicError):
    """A feature is mathematically undefined for the given input."""


class DegenerateDenominatorError(OcMusicError):
    """The complexity denominator of the aesthetic measure is too close to zero."""


class TrainingError(OcMusicError):
    """Training cannot proceed (e.g. a single class) or diverged."""


class ModelFormatError(OcMusicError):
    """Model file of an unknown kind or incompatible version."""


class VocabularyError(OcMusicError):
    """Item id missing from the recommender vocabulary."""


class NumericFailureError(OcMusicError):
    """Non-finite activations inside the transformer."""

    def __init__(self, message: str, layer: int | None = None):
        self.layer = layer
        super().__init__(message)
