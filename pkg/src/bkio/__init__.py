"""bkio: columnar event-store with bulk basket IO and parallel unzipping.

Data is laid out as branches (columns) of primitive elements, buffered
per branch and flushed as compressed baskets, with event-cluster
boundaries at which every branch flushes together. The reader offers a
per-entry proxy API, whole-basket bulk delivery (serialized or decoded),
aligned range reads with view/copy semantics, and an asynchronous
parallel unzipping pipeline.
"""

from .codecs import CodecPoint, CodecStats, CompressResult, compress, decompress, ratio_and_speed
from .errors import (
    BadMagicError,
    BenchmarkError,
    BkioError,
    CodecError,
    ConfigError,
    CorruptFrameError,
    EntryRangeError,
    FillValueError,
    FormatError,
    InvariantViolationError,
    PoolShutdownError,
    ReaderClosedError,
    SizeMismatchError,
    StaleViewError,
    TruncatedFileError,
    UnsupportedShapeError,
    UnsupportedVersionError,
    WriterClosedError,
)
from .format import (
    BasketMeta,
    BranchDescriptor,
    BranchShape,
    ClusterIndex,
    Codec,
    CompressionSpec,
    ElementType,
    FileTables,
    ShapeKind,
    decode_file,
)
from .prefetch import PrefetchConfig, UnzipTask, partition_baskets
from .reader import BkioReader, BulkSlice, DeliveryMode, EntryProxy, Ownership, decode_elements, open_reader
from .writer import BkioWriter, WriterConfig, WriteSummary, open_writer

__version__ = "0.1.0"

__all__ = [
    "BasketMeta",
    "BadMagicError",
    "BenchmarkError",
    "BkioError",
    "BkioReader",
    "BkioWriter",
    "BranchDescriptor",
    "BranchShape",
    "BulkSlice",
    "ClusterIndex",
    "Codec",
    "CodecError",
    "CodecPoint",
    "CodecStats",
    "CompressResult",
    "CompressionSpec",
    "ConfigError",
    "CorruptFrameError",
    "DeliveryMode",
    "ElementType",
    "EntryProxy",
    "EntryRangeError",
    "FileTables",
    "FillValueError",
    "FormatError",
    "InvariantViolationError",
    "Ownership",
    "PoolShutdownError",
    "PrefetchConfig",
    "ReaderClosedError",
    "ShapeKind",
    "SizeMismatchError",
    "StaleViewError",
    "TruncatedFileError",
    "UnsupportedShapeError",
    "UnsupportedVersionError",
    "UnzipTask",
    "WriteSummary",
    "WriterClosedError",
    "WriterConfig",
    "compress",
    "decode_elements",
    "decode_file",
    "decompress",
    "open_reader",
    "open_writer",
    "partition_baskets",
    "ratio_and_speed",
]
