"""BKIO v1 container format: domain types and the bit-exact on-disk layout.

A BKIO file is::

    header (12 bytes) | basket records ... | footer block | trailer (12 bytes)

    header  = b"BKIO" | version u32 | reserved u32
    record  = branch_id u32 | first_entry u64 | entry_count u32 |
              codec u8 | level u8 | uncompressed_size u32 | compressed_size u32 |
              payload
    trailer = footer_offset u64 | b"BKIO"

Every multi-byte integer on disk is big-endian, as are element payloads.
The footer is the sole index: record headers in the body are redundant
copies kept for corruption diagnostics. A reader seeks 12 bytes from the
end, reads the trailer, and jumps straight to the footer.

All types here are immutable after construction; encode/decode functions
are pure.
"""

from __future__ import annotations

import enum
import io
import struct
from dataclasses import dataclass, field
from typing import BinaryIO, Sequence

from .errors import (
    BadMagicError,
    InvariantViolationError,
    TruncatedFileError,
    UnsupportedVersionError,
)

MAGIC = b"BKIO"
FOOTER_MAGIC = b"BKFT"
FORMAT_VERSION = 1
HEADER_SIZE = 12
TRAILER_SIZE = 12
RECORD_HEADER = struct.Struct(">IQIBBII")  # 26 bytes
RECORD_HEADER_SIZE = RECORD_HEADER.size


class ElementType(enum.Enum):
    """Primitive element kinds storable in a branch."""

    f32 = "f32"
    f64 = "f64"
    i32 = "i32"
    i64 = "i64"
    u8 = "u8"

    @property
    def width(self) -> int:
        return _WIDTHS[self]

    @property
    def be_dtype(self) -> str:
        """numpy dtype string for the big-endian on-disk form."""
        return _BE_DTYPES[self]

    @property
    def native_dtype(self) -> str:
        """numpy dtype string for the host-native decoded form."""
        return _NATIVE_DTYPES[self]

    @property
    def struct_char(self) -> str:
        return _STRUCT_CHARS[self]


_WIDTHS = {
    ElementType.f32: 4,
    ElementType.f64: 8,
    ElementType.i32: 4,
    ElementType.i64: 8,
    ElementType.u8: 1,
}
_BE_DTYPES = {
    ElementType.f32: ">f4",
    ElementType.f64: ">f8",
    ElementType.i32: ">i4",
    ElementType.i64: ">i8",
    ElementType.u8: "u1",
}
_NATIVE_DTYPES = {
    ElementType.f32: "=f4",
    ElementType.f64: "=f8",
    ElementType.i32: "=i4",
    ElementType.i64: "=i8",
    ElementType.u8: "u1",
}
_STRUCT_CHARS = {
    ElementType.f32: "f",
    ElementType.f64: "d",
    ElementType.i32: "i",
    ElementType.i64: "q",
    ElementType.u8: "B",
}


class ShapeKind(enum.Enum):
    scalar = "scalar"
    fixed_array = "fixed_array"
    var_array = "var_array"


@dataclass(frozen=True)
class BranchShape:
    """Scalar, fixed-length array, or variable-length array per entry."""

    kind: ShapeKind
    fixed_len: int = 0

    def __post_init__(self):
        if self.kind is ShapeKind.fixed_array:
            if self.fixed_len < 1:
                raise InvariantViolationError("fixed_array length must be >= 1")
        elif self.fixed_len != 0:
            raise InvariantViolationError(f"{self.kind.value} shape takes no length")

    @classmethod
    def scalar(cls) -> "BranchShape":
        return cls(ShapeKind.scalar)

    @classmethod
    def fixed_array(cls, length: int) -> "BranchShape":
        return cls(ShapeKind.fixed_array, length)

    @classmethod
    def var_array(cls) -> "BranchShape":
        return cls(ShapeKind.var_array)

    @property
    def is_var(self) -> bool:
        return self.kind is ShapeKind.var_array

    def elements_per_entry(self) -> int:
        """Elements per entry for scalar/fixed shapes; raises for var_array."""
        if self.kind is ShapeKind.scalar:
            return 1
        if self.kind is ShapeKind.fixed_array:
            return self.fixed_len
        raise InvariantViolationError("var_array has no fixed element count")


@dataclass(frozen=True)
class BranchDescriptor:
    """Schema of one column."""

    branch_id: int
    name: str
    element: ElementType
    shape: BranchShape
    basket_target_bytes: int

    def __post_init__(self):
        if self.branch_id < 0:
            raise InvariantViolationError("branch_id must be >= 0")
        if not self.name:
            raise InvariantViolationError("branch name must be non-empty")
        if self.basket_target_bytes < self.element.width:
            raise InvariantViolationError(
                f"branch {self.name!r}: basket_target_bytes must be >= one element"
            )


class Codec(enum.Enum):
    none = "none"
    deflate = "deflate"
    lz4 = "lz4"
    lz4hc = "lz4hc"


_CODEC_IDS = {Codec.none: 0, Codec.deflate: 1, Codec.lz4: 2, Codec.lz4hc: 3}
_CODECS_BY_ID = {v: k for k, v in _CODEC_IDS.items()}
_LEVEL_RANGES = {
    Codec.none: (0, 0),
    Codec.deflate: (1, 9),
    Codec.lz4: (1, 1),
    Codec.lz4hc: (1, 12),
}


@dataclass(frozen=True)
class CompressionSpec:
    """Codec identifier + level governing a basket's payload encoding."""

    codec: Codec
    level: int

    def __post_init__(self):
        lo, hi = _LEVEL_RANGES[self.codec]
        if not lo <= self.level <= hi:
            raise InvariantViolationError(
                f"codec {self.codec.value} level must be in [{lo}, {hi}], got {self.level}"
            )

    @classmethod
    def of(cls, codec: str, level: int | None = None) -> "CompressionSpec":
        c = Codec(codec)
        if level is None:
            level = {Codec.none: 0, Codec.deflate: 6, Codec.lz4: 1, Codec.lz4hc: 9}[c]
        return cls(c, level)

    @property
    def label(self) -> str:
        return f"{self.codec.value}-{self.level}"


STORED = CompressionSpec(Codec.none, 0)


@dataclass(frozen=True)
class BasketMeta:
    """One compressed block of consecutive entries for one branch."""

    branch_id: int
    first_entry: int
    entry_count: int
    file_offset: int
    compressed_size: int
    uncompressed_size: int
    spec: CompressionSpec

    def __post_init__(self):
        if self.entry_count < 1:
            raise InvariantViolationError("basket entry_count must be >= 1")
        if min(self.first_entry, self.file_offset, self.compressed_size, self.uncompressed_size) < 0:
            raise InvariantViolationError("basket sizes/offsets must be >= 0")

    @property
    def end_entry(self) -> int:
        return self.first_entry + self.entry_count


@dataclass(frozen=True)
class ClusterIndex:
    """Entry numbers at which every branch flushed simultaneously.

    boundaries[k] is the exclusive end of cluster k; cluster k covers
    [boundaries[k-1], boundaries[k]) with an implicit leading 0.
    """

    boundaries: tuple[int, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "boundaries", tuple(self.boundaries))
        prev = 0
        for b in self.boundaries:
            if b <= prev:
                raise InvariantViolationError("cluster boundaries must be strictly increasing")
            prev = b

    @property
    def n_clusters(self) -> int:
        return len(self.boundaries)

    def cluster_of(self, entry: int) -> int:
        """Index of the cluster containing `entry`."""
        import bisect

        return bisect.bisect_right(self.boundaries, entry)

    def cluster_range(self, k: int) -> tuple[int, int]:
        if not 0 <= k < len(self.boundaries):
            raise IndexError(f"cluster {k} out of range")
        start = self.boundaries[k - 1] if k > 0 else 0
        return start, self.boundaries[k]


@dataclass(frozen=True)
class FileTables:
    """Everything decode_file recovers: the full index of a BKIO file."""

    branches: tuple[BranchDescriptor, ...]
    baskets: tuple[BasketMeta, ...]
    clusters: ClusterIndex
    total_entries: int

    branch_by_name: dict = field(repr=False, compare=False, default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "branches", tuple(self.branches))
        object.__setattr__(self, "baskets", tuple(self.baskets))
        object.__setattr__(
            self, "branch_by_name", {b.name: b for b in self.branches}
        )


# ---------------------------------------------------------------------------
# encoding


def encode_file_header(version: int = FORMAT_VERSION) -> bytes:
    """12-byte file header. Only version 1 exists."""
    if version != FORMAT_VERSION:
        raise UnsupportedVersionError(f"unsupported version {version}")
    return MAGIC + struct.pack(">II", version, 0)


def decode_file_header(buf: bytes) -> int:
    if len(buf) < HEADER_SIZE:
        raise TruncatedFileError("file shorter than header")
    if buf[:4] != MAGIC:
        raise BadMagicError("bad header magic")
    version, _reserved = struct.unpack(">II", buf[4:12])
    if version != FORMAT_VERSION:
        raise UnsupportedVersionError(f"unsupported version {version}")
    return version


def encode_basket_record(meta: BasketMeta, payload: bytes) -> bytes:
    """Record header + payload as stored in the file body."""
    if len(payload) != meta.compressed_size:
        raise InvariantViolationError(
            f"payload is {len(payload)} bytes, meta says {meta.compressed_size}"
        )
    header = RECORD_HEADER.pack(
        meta.branch_id,
        meta.first_entry,
        meta.entry_count,
        _CODEC_IDS[meta.spec.codec],
        meta.spec.level,
        meta.uncompressed_size,
        meta.compressed_size,
    )
    return header + payload


def decode_basket_record(buf: bytes, file_offset: int = 0) -> tuple[BasketMeta, bytes]:
    """Inverse of encode_basket_record. `file_offset` seeds the meta field."""
    if len(buf) < RECORD_HEADER_SIZE:
        raise TruncatedFileError("record shorter than header")
    bid, first, count, codec_id, level, usize, csize = RECORD_HEADER.unpack_from(buf)
    if codec_id not in _CODECS_BY_ID:
        raise InvariantViolationError(f"unknown codec id {codec_id}")
    if len(buf) < RECORD_HEADER_SIZE + csize:
        raise TruncatedFileError("record payload truncated")
    payload = bytes(buf[RECORD_HEADER_SIZE : RECORD_HEADER_SIZE + csize])
    meta = BasketMeta(
        branch_id=bid,
        first_entry=first,
        entry_count=count,
        file_offset=file_offset,
        compressed_size=csize,
        uncompressed_size=usize,
        spec=CompressionSpec(_CODECS_BY_ID[codec_id], level),
    )
    return meta, payload


def _encode_str(s: str) -> bytes:
    raw = s.encode("utf-8")
    if len(raw) > 0xFFFF:
        raise InvariantViolationError("name too long")
    return struct.pack(">H", len(raw)) + raw


class _Cursor:
    """Sequential big-endian reads with truncation checks."""

    def __init__(self, buf: bytes):
        self.buf = buf
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.buf):
            raise TruncatedFileError("footer block truncated")
        out = self.buf[self.pos : self.pos + n]
        self.pos += n
        return out

    def u8(self) -> int:
        return self.take(1)[0]

    def u16(self) -> int:
        return struct.unpack(">H", self.take(2))[0]

    def u32(self) -> int:
        return struct.unpack(">I", self.take(4))[0]

    def u64(self) -> int:
        return struct.unpack(">Q", self.take(8))[0]


def encode_footer(
    branches: Sequence[BranchDescriptor],
    baskets: Sequence[BasketMeta],
    clusters: ClusterIndex,
    total_entries: int,
    *,
    footer_offset: int,
) -> bytes:
    """Footer block plus the 12-byte trailer pointing back at it.

    `footer_offset` is the absolute file offset the block will be written at.
    Raises InvariantViolationError if the tables are not self-consistent.
    """
    validate_tables(branches, baskets, clusters, total_entries)
    out = io.BytesIO()
    out.write(FOOTER_MAGIC)
    out.write(struct.pack(">Q", total_entries))
    out.write(struct.pack(">I", len(branches)))
    for br in branches:
        out.write(struct.pack(">I", br.branch_id))
        out.write(_encode_str(br.name))
        out.write(struct.pack(">BB", _ELEMENT_IDS[br.element], _SHAPE_IDS[br.shape.kind]))
        out.write(struct.pack(">IQ", br.shape.fixed_len, br.basket_target_bytes))
    out.write(struct.pack(">Q", len(baskets)))
    for bk in baskets:
        out.write(
            struct.pack(
                ">IQIQIIBB",
                bk.branch_id,
                bk.first_entry,
                bk.entry_count,
                bk.file_offset,
                bk.compressed_size,
                bk.uncompressed_size,
                _CODEC_IDS[bk.spec.codec],
                bk.spec.level,
            )
        )
    out.write(struct.pack(">I", clusters.n_clusters))
    for b in clusters.boundaries:
        out.write(struct.pack(">Q", b))
    out.write(struct.pack(">Q", footer_offset))
    out.write(MAGIC)
    return out.getvalue()


_ELEMENT_IDS = {e: i for i, e in enumerate(ElementType)}
_ELEMENTS_BY_ID = {i: e for e, i in _ELEMENT_IDS.items()}
_SHAPE_IDS = {ShapeKind.scalar: 0, ShapeKind.fixed_array: 1, ShapeKind.var_array: 2}
_SHAPES_BY_ID = {v: k for k, v in _SHAPE_IDS.items()}


def decode_footer_block(buf: bytes) -> FileTables:
    """Parse the footer block (without trailer) back into tables."""
    cur = _Cursor(buf)
    if cur.take(4) != FOOTER_MAGIC:
        raise BadMagicError("bad footer magic")
    total_entries = cur.u64()
    branches = []
    for _ in range(cur.u32()):
        bid = cur.u32()
        name = cur.take(cur.u16()).decode("utf-8")
        elem_id, shape_id = cur.u8(), cur.u8()
        fixed_len = cur.u32()
        target = cur.u64()
        if elem_id not in _ELEMENTS_BY_ID:
            raise InvariantViolationError(f"unknown element id {elem_id}")
        if shape_id not in _SHAPES_BY_ID:
            raise InvariantViolationError(f"unknown shape id {shape_id}")
        branches.append(
            BranchDescriptor(
                branch_id=bid,
                name=name,
                element=_ELEMENTS_BY_ID[elem_id],
                shape=BranchShape(_SHAPES_BY_ID[shape_id], fixed_len),
                basket_target_bytes=target,
            )
        )
    baskets = []
    for _ in range(cur.u64()):
        bid, first, count = cur.u32(), cur.u64(), cur.u32()
        offset = cur.u64()
        csize, usize = cur.u32(), cur.u32()
        codec_id, level = cur.u8(), cur.u8()
        if codec_id not in _CODECS_BY_ID:
            raise InvariantViolationError(f"unknown codec id {codec_id}")
        baskets.append(
            BasketMeta(
                branch_id=bid,
                first_entry=first,
                entry_count=count,
                file_offset=offset,
                compressed_size=csize,
                uncompressed_size=usize,
                spec=CompressionSpec(_CODECS_BY_ID[codec_id], level),
            )
        )
    clusters = ClusterIndex(tuple(cur.u64() for _ in range(cur.u32())))
    tables = FileTables(tuple(branches), tuple(baskets), clusters, total_entries)
    validate_tables(tables.branches, tables.baskets, tables.clusters, total_entries)
    return tables


def validate_tables(
    branches: Sequence[BranchDescriptor],
    baskets: Sequence[BasketMeta],
    clusters: ClusterIndex,
    total_entries: int,
) -> None:
    """Check every cross-table invariant; raise InvariantViolationError if broken."""
    ids = [b.branch_id for b in branches]
    if sorted(ids) != list(range(len(branches))):
        raise InvariantViolationError("branch ids must be dense from 0")
    names = {b.name for b in branches}
    if len(names) != len(branches):
        raise InvariantViolationError("branch names must be unique")

    per_branch: dict[int, list[BasketMeta]] = {b.branch_id: [] for b in branches}
    for bk in baskets:
        if bk.branch_id not in per_branch:
            raise InvariantViolationError(f"basket references undefined branch {bk.branch_id}")
        per_branch[bk.branch_id].append(bk)

    starts_by_branch: dict[int, set[int]] = {}
    for bid, metas in per_branch.items():
        metas.sort(key=lambda m: m.first_entry)
        pos = 0
        for m in metas:
            if m.first_entry != pos:
                raise InvariantViolationError(
                    f"branch {bid}: basket at entry {m.first_entry}, expected {pos}"
                )
            pos = m.end_entry
        if metas and pos != total_entries:
            raise InvariantViolationError(
                f"branch {bid}: baskets cover [0, {pos}) but file has {total_entries} entries"
            )
        if not metas and total_entries > 0 and branches:
            raise InvariantViolationError(f"branch {bid}: no baskets but file has entries")
        starts_by_branch[bid] = {m.first_entry for m in metas}

    if total_entries > 0 and branches:
        if clusters.n_clusters == 0 or clusters.boundaries[-1] != total_entries:
            raise InvariantViolationError("last cluster boundary must equal total_entries")
    for b in clusters.boundaries:
        if b > total_entries:
            raise InvariantViolationError("cluster boundary beyond total_entries")
        if b < total_entries:
            for bid, starts in starts_by_branch.items():
                if b not in starts:
                    raise InvariantViolationError(
                        f"branch {bid}: no basket starts at cluster boundary {b}"
                    )


def decode_file(source: str | BinaryIO) -> FileTables:
    """Decode the tables of a BKIO v1 file (path or seekable binary file).

    Validates magic at head and tail, the version, and every table invariant.
    Payloads are not read.
    """
    if isinstance(source, (str, bytes)):
        with open(source, "rb") as f:
            return decode_file(f)

    source.seek(0, io.SEEK_END)
    size = source.tell()
    if size < HEADER_SIZE + TRAILER_SIZE:
        raise TruncatedFileError(f"file is {size} bytes, smaller than header+trailer")
    source.seek(0)
    decode_file_header(source.read(HEADER_SIZE))

    source.seek(size - TRAILER_SIZE)
    trailer = source.read(TRAILER_SIZE)
    footer_offset = struct.unpack(">Q", trailer[:8])[0]
    if trailer[8:] != MAGIC:
        # Distinguish a damaged trailer from a chopped file: if the offset
        # field still points at a real footer block, only the magic is bad.
        if HEADER_SIZE <= footer_offset <= size - TRAILER_SIZE - 4:
            source.seek(footer_offset)
            if source.read(4) == FOOTER_MAGIC:
                raise BadMagicError("bad trailer magic")
        raise TruncatedFileError("trailer missing; file is truncated or not BKIO")
    if not HEADER_SIZE <= footer_offset < size - TRAILER_SIZE:
        raise TruncatedFileError("footer offset outside file")

    source.seek(footer_offset)
    block = source.read(size - TRAILER_SIZE - footer_offset)
    tables = decode_footer_block(block)
    for bk in tables.baskets:
        if bk.file_offset < HEADER_SIZE or bk.file_offset + RECORD_HEADER_SIZE + bk.compressed_size > footer_offset:
            raise TruncatedFileError(
                f"basket at offset {bk.file_offset} extends past the data region"
            )
    return tables
