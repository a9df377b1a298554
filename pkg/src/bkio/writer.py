"""File writer: per-branch buffers, flush-on-full baskets, event clusters.

Each branch accumulates serialized entries in its own memory buffer.
A branch flushes independently as soon as its buffer is full; appending
an entry that would push the buffer past its target flushes first, and
an entry larger than the target gets a basket of its own, so one entry
never spans baskets. Every `cluster_every` entries all branches flush
together and the boundary is recorded in the cluster index.

Writers are single-threaded; concurrent fill calls are a caller error.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from . import codecs
from .errors import ConfigError, FillValueError, WriterClosedError
from .format import (
    BasketMeta,
    BranchDescriptor,
    ClusterIndex,
    CompressionSpec,
    ShapeKind,
    encode_basket_record,
    encode_file_header,
    encode_footer,
)

_VAR_OFFSET_WIDTH = 4  # u32 prefix-sum offsets ahead of var_array elements


@dataclass(frozen=True)
class WriterConfig:
    branches: tuple[BranchDescriptor, ...]
    spec: CompressionSpec
    cluster_every: int

    def __post_init__(self):
        object.__setattr__(self, "branches", tuple(self.branches))
        if self.cluster_every < 1:
            raise ConfigError("cluster_every must be >= 1")
        ids = [b.branch_id for b in self.branches]
        if ids != list(range(len(self.branches))):
            raise ConfigError("branches must be ordered with dense ids from 0")
        names = [b.name for b in self.branches]
        if len(set(names)) != len(names):
            raise ConfigError("duplicate branch names")


def make_branches(*specs: tuple) -> tuple[BranchDescriptor, ...]:
    """Build descriptors from (name, element, shape, basket_target_bytes)
    tuples, assigning dense branch ids in order."""
    return tuple(
        BranchDescriptor(i, name, elem, shape, target)
        for i, (name, elem, shape, target) in enumerate(specs)
    )


@dataclass(frozen=True)
class WriteSummary:
    total_entries: int
    basket_count: int
    bytes_written: int


class _BranchBuffer:
    """Accumulates serialized entries for one branch between flushes."""

    __slots__ = (
        "desc", "data", "entries", "first_entry", "offsets",
        "entry_bytes", "packer", "width",
    )

    def __init__(self, desc: BranchDescriptor):
        self.desc = desc
        self.width = desc.element.width
        shape = desc.shape
        if shape.kind is ShapeKind.var_array:
            self.entry_bytes = -1
            self.packer = None
        else:
            n = shape.elements_per_entry()
            self.entry_bytes = n * self.width
            self.packer = struct.Struct(f">{n}{desc.element.struct_char}")
        self.reset(0)

    def reset(self, first_entry: int) -> None:
        self.data = bytearray()
        self.entries = 0
        self.first_entry = first_entry
        self.offsets = [0] if self.entry_bytes < 0 else None

    @property
    def size(self) -> int:
        if self.entries == 0:
            return 0
        if self.offsets is None:
            return len(self.data)
        return _VAR_OFFSET_WIDTH * (self.entries + 1) + len(self.data)

    def size_after(self, value_bytes: int) -> int:
        if self.offsets is None:
            return len(self.data) + value_bytes
        return _VAR_OFFSET_WIDTH * (self.entries + 2) + len(self.data) + value_bytes

    def serialize(self, value) -> bytes:
        """One entry's element bytes, big-endian; raises FillValueError."""
        desc = self.desc
        kind = desc.shape.kind
        try:
            if kind is ShapeKind.scalar:
                return self.packer.pack(value)
            if kind is ShapeKind.fixed_array:
                arr = np.asarray(value)
                if arr.shape != (desc.shape.fixed_len,):
                    raise FillValueError(
                        desc.name,
                        f"expected {desc.shape.fixed_len} elements, got shape {arr.shape}",
                    )
                return arr.astype(desc.element.be_dtype, copy=False).tobytes()
            arr = np.asarray(value)
            if arr.ndim != 1:
                raise FillValueError(desc.name, f"var_array value must be 1-D, got {arr.ndim}-D")
            return arr.astype(desc.element.be_dtype, copy=False).tobytes()
        except FillValueError:
            raise
        except (struct.error, TypeError, ValueError) as exc:
            raise FillValueError(desc.name, str(exc)) from exc

    def append_serialized(self, raw: bytes) -> None:
        self.data += raw
        self.entries += 1
        if self.offsets is not None:
            self.offsets.append(self.offsets[-1] + len(raw) // self.width)

    def payload(self) -> bytes:
        if self.offsets is None:
            return bytes(self.data)
        offs = np.asarray(self.offsets, dtype=">u4").tobytes()
        return offs + bytes(self.data)


class BkioWriter:
    """An open file being built; see open_writer."""

    def __init__(self, path: str, config: WriterConfig):
        self.config = config
        self._buffers = [_BranchBuffer(b) for b in config.branches]
        self._next_entry = 0
        self._baskets: list[BasketMeta] = []
        self._boundaries: list[int] = []
        self._closed = False
        self._file = open(path, "wb")
        try:
            self._file.write(encode_file_header())
            self._offset = self._file.tell()
        except Exception:
            self._file.close()
            raise

    # -- properties ---------------------------------------------------

    @property
    def next_entry(self) -> int:
        return self._next_entry

    @property
    def baskets(self) -> list[BasketMeta]:
        return list(self._baskets)

    def _check_open(self):
        if self._closed:
            raise WriterClosedError("writer is closed")

    # -- filling ------------------------------------------------------

    def fill_entry(self, values) -> None:
        """Append one entry: one value per branch, by branch order or name."""
        self._check_open()
        values = self._per_branch(values)
        serialized = [buf.serialize(v) for buf, v in zip(self._buffers, values)]
        for buf, raw in zip(self._buffers, serialized):
            target = buf.desc.basket_target_bytes
            if buf.entries > 0 and buf.size_after(len(raw)) > target:
                self._flush_branch(buf)
            buf.append_serialized(raw)
            if buf.size >= target:
                self._flush_branch(buf)
        self._next_entry += 1
        if self._next_entry % self.config.cluster_every == 0:
            self.flush_cluster()

    def _per_branch(self, values) -> list:
        branches = self.config.branches
        if isinstance(values, Mapping):
            missing = [b.name for b in branches if b.name not in values]
            if missing:
                raise FillValueError(missing[0], "missing value")
            return [values[b.name] for b in branches]
        values = list(values)
        if len(values) != len(branches):
            raise ConfigError(
                f"expected {len(branches)} values, got {len(values)}"
            )
        return values

    def fill_many(self, columns: Mapping[str, object]) -> None:
        """Append many entries at once from per-branch columns.

        Produces the same baskets (entry ranges, payloads, cluster
        boundaries) as the equivalent fill_entry loop; within a cluster
        the records land column-grouped rather than interleaved. Scalar
        branches take a 1-D array, fixed_array branches an (n, len)
        array, var_array branches a list of 1-D arrays.
        """
        self._check_open()
        branches = self.config.branches
        missing = [b.name for b in branches if b.name not in columns]
        if missing:
            raise FillValueError(missing[0], "missing column")

        cols = []
        n = None
        for b in branches:
            col = columns[b.name]
            if b.shape.kind is ShapeKind.var_array:
                col = list(col)
                rows = len(col)
            else:
                col = np.asarray(col)
                want = (b.shape.fixed_len,) if b.shape.kind is ShapeKind.fixed_array else ()
                if col.shape[1:] != want:
                    raise FillValueError(b.name, f"column shape {col.shape} does not match branch")
                rows = col.shape[0]
                col = np.ascontiguousarray(col.astype(b.element.be_dtype, copy=False))
            if n is None:
                n = rows
            elif rows != n:
                raise FillValueError(b.name, f"column has {rows} rows, expected {n}")
            cols.append(col)
        if not branches or n == 0:
            return

        done = 0
        cluster_every = self.config.cluster_every
        while done < n:
            room = cluster_every - (self._next_entry % cluster_every)
            take = min(room, n - done)
            for buf, col in zip(self._buffers, cols):
                if buf.entry_bytes < 0:
                    for i in range(done, done + take):
                        self._append_with_flush(buf, buf.serialize(col[i]))
                else:
                    self._append_column_chunk(buf, col, done, take)
            self._next_entry += take
            done += take
            if self._next_entry % cluster_every == 0:
                self.flush_cluster()

    def _append_with_flush(self, buf: _BranchBuffer, raw: bytes) -> None:
        target = buf.desc.basket_target_bytes
        if buf.entries > 0 and buf.size_after(len(raw)) > target:
            self._flush_branch(buf)
        buf.append_serialized(raw)
        if buf.size >= target:
            self._flush_branch(buf)

    def _append_column_chunk(self, buf: _BranchBuffer, col: np.ndarray, start: int, count: int) -> None:
        # Constant entry size: a basket holds exactly max(1, target // size)
        # entries, which reproduces the per-entry flush rule.
        s = buf.entry_bytes
        capacity = max(1, buf.desc.basket_target_bytes // s)
        pos = start
        end = start + count
        while pos < end:
            take = min(capacity - buf.entries, end - pos)
            buf.data += col[pos : pos + take].tobytes()
            buf.entries += take
            pos += take
            if buf.entries == capacity:
                self._flush_branch(buf)

    # -- flushing -----------------------------------------------------

    def _flush_branch(self, buf: _BranchBuffer) -> None:
        payload = buf.payload()
        result = codecs.compress(payload, self.config.spec)
        meta = BasketMeta(
            branch_id=buf.desc.branch_id,
            first_entry=buf.first_entry,
            entry_count=buf.entries,
            file_offset=self._offset,
            compressed_size=len(result.frame),
            uncompressed_size=len(payload),
            spec=result.spec,
        )
        record = encode_basket_record(meta, result.frame)
        self._file.write(record)
        self._offset += len(record)
        self._baskets.append(meta)
        buf.reset(buf.first_entry + buf.entries)

    def flush_cluster(self) -> None:
        """Flush every non-empty branch buffer and record a cluster boundary."""
        self._check_open()
        for buf in self._buffers:
            if buf.entries > 0:
                self._flush_branch(buf)
        if self._next_entry > 0 and (
            not self._boundaries or self._boundaries[-1] != self._next_entry
        ):
            self._boundaries.append(self._next_entry)

    def close(self) -> WriteSummary:
        """Final cluster flush, footer, trailer; returns the file summary."""
        self._check_open()
        self.flush_cluster()
        self._closed = True
        footer = encode_footer(
            self.config.branches,
            self._baskets,
            ClusterIndex(tuple(self._boundaries)),
            self._next_entry,
            footer_offset=self._offset,
        )
        self._file.write(footer)
        total = self._offset + len(footer)
        self._file.close()
        return WriteSummary(
            total_entries=self._next_entry,
            basket_count=len(self._baskets),
            bytes_written=total,
        )

    def __enter__(self) -> "BkioWriter":
        return self

    def __exit__(self, exc_type, exc, tb):
        if not self._closed:
            if exc_type is None:
                self.close()
            else:
                self._closed = True
                self._file.close()


def open_writer(path: str, config: WriterConfig) -> BkioWriter:
    """Create a BKIO v1 file at `path` and return the open writer."""
    return BkioWriter(path, config)
