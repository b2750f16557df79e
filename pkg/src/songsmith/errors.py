"""Exception hierarchy shared across the package."""


class SongsmithError(Exception):
    """Base class for every error raised by this package."""


class DimensionError(SongsmithError):
    """Array shapes do not satisfy an operation's contract."""


class ContractError(SongsmithError):
    """An argument violates a documented precondition."""


class TokenizationError(SongsmithError):
    """Lyrics text could not be tokenized."""


class ConfigError(SongsmithError):
    """A configuration value is out of its valid range."""


class CorpusFormatError(SongsmithError):
    """A corpus file is malformed; the message names the offending line."""


class CheckpointError(SongsmithError):
    """A checkpoint blob is unreadable, corrupted, or from an unknown version."""


class MidiFormatError(SongsmithError):
    """A MIDI byte stream violates the Standard MIDI File format."""


class VocabLookupError(SongsmithError):
    """A token is missing from the vocabulary; the message lists it."""


class NotFoundError(SongsmithError):
    """A session-store id is unknown or has been evicted."""
