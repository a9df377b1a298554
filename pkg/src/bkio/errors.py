"""Exception hierarchy for the bkio library.

Every failure mode the library can report has its own class so callers
(and the CLI) can distinguish them without string matching.
"""


class BkioError(Exception):
    """Base class for all bkio errors."""


class FormatError(BkioError):
    """A file violates the BKIO container layout."""


class BadMagicError(FormatError):
    """Header or trailer magic bytes are wrong."""


class TruncatedFileError(FormatError):
    """The file ends before a structure it promises is complete."""


class UnsupportedVersionError(FormatError):
    """The container declares a format version this build does not read."""


class InvariantViolationError(FormatError):
    """Decoded tables are self-inconsistent (bad index, gap in entries, ...)."""


class ConfigError(BkioError):
    """Invalid schema or writer/reader configuration."""


class CodecError(BkioError):
    """Base for compression/decompression failures."""


class CorruptFrameError(CodecError):
    """A compressed frame cannot be decoded."""


class SizeMismatchError(CodecError):
    """A frame decoded cleanly but not to the promised byte count."""


class FillValueError(BkioError):
    """A value handed to fill_entry does not match its branch's type/shape."""

    def __init__(self, branch_name: str, message: str):
        super().__init__(f"branch {branch_name!r}: {message}")
        self.branch_name = branch_name


class EntryRangeError(BkioError, IndexError):
    """Entry or basket index outside the file."""


class UnsupportedShapeError(BkioError):
    """Operation does not support this branch shape (e.g. bulk on var_array)."""


class StaleViewError(BkioError):
    """A zero-copy view was used after its basket may have been evicted."""


class WriterClosedError(BkioError):
    """Operation on a writer that was already closed."""


class ReaderClosedError(BkioError):
    """Operation on a reader that was already closed."""


class PoolShutdownError(BkioError):
    """Prefetch work was requested from or lost to a shut-down worker pool."""


class BenchmarkError(BkioError):
    """Invalid benchmark request (bad method/shape combination, no results, ...)."""
