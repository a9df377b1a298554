"""Read path: per-entry proxies, whole-basket bulk delivery, aligned ranges.

Two access styles coexist:

* ``get_entry`` — the traditional loop: locate the basket covering one
  entry, decode just that entry into a proxy object. Pays a library
  call per event.
* ``read_basket_bulk`` / ``read_range_aligned`` — one call delivers a
  whole basket (or a stitched entry range) as an array, either as the
  raw big-endian bytes or decoded to host-native values.

Views alias the reader's decompressed-basket cache and carry a
generation stamp; any cache eviction invalidates outstanding views, so
a stale view raises instead of reading garbage. Copies own their data.

The decompressed cache holds at most two clusters (current + next) and
is internally locked because prefetch workers insert into it.
"""

from __future__ import annotations

import enum
import os
import struct
import threading
from bisect import bisect_right
from typing import Iterable, Sequence

import numpy as np

from . import codecs
from .errors import (
    EntryRangeError,
    InvariantViolationError,
    ReaderClosedError,
    StaleViewError,
    UnsupportedShapeError,
)
from .format import (
    BasketMeta,
    BranchDescriptor,
    ElementType,
    FileTables,
    RECORD_HEADER,
    RECORD_HEADER_SIZE,
    ShapeKind,
    decode_file,
)

_STRUCT_DECODE_MAX = 256  # fixed arrays up to this many elements decode via struct
_CACHE_CLUSTERS = 2


def decode_elements(raw, element: ElementType) -> np.ndarray:
    """Decode big-endian element bytes into a native array (pure function)."""
    buf = memoryview(raw)
    if buf.nbytes % element.width != 0:
        raise ValueError(
            f"{buf.nbytes} bytes is not a multiple of {element.width}-byte {element.value}"
        )
    return np.frombuffer(buf, dtype=element.be_dtype).astype(element.native_dtype)


class DeliveryMode(enum.Enum):
    raw_serialized = "raw_serialized"
    decoded_native = "decoded_native"


class Ownership(enum.Enum):
    view = "view"
    copy = "copy"


class EntryProxy:
    """Decoded values of one entry for the requested branches."""

    __slots__ = ("entry", "_vals")

    def __init__(self, entry: int, vals: dict):
        self.entry = entry
        self._vals = vals

    def __getitem__(self, name: str):
        return self._vals[name]

    def __contains__(self, name: str) -> bool:
        return name in self._vals

    def keys(self):
        return self._vals.keys()

    def items(self):
        return self._vals.items()

    def __repr__(self):
        return f"EntryProxy(entry={self.entry}, {self._vals!r})"


class BulkSlice:
    """Caller-visible handle over one decoded basket or stitched range."""

    __slots__ = (
        "branch_id", "branch_name", "first_entry", "entry_count",
        "mode", "ownership", "offsets", "_data", "_reader", "_stamp",
    )

    def __init__(self, branch, first_entry, entry_count, mode, ownership,
                 data, reader=None, stamp=0, offsets=None):
        self.branch_id = branch.branch_id
        self.branch_name = branch.name
        self.first_entry = first_entry
        self.entry_count = entry_count
        self.mode = mode
        self.ownership = ownership
        self.offsets = offsets  # per-entry element offsets for var_array ranges
        self._data = data
        self._reader = reader
        self._stamp = stamp

    def _check(self):
        if self.ownership is Ownership.view and self._reader._generation != self._stamp:
            raise StaleViewError(
                f"view of branch {self.branch_name!r} basket {self.first_entry} "
                "used after its basket may have been evicted"
            )

    @property
    def values(self) -> np.ndarray:
        """The slice's array: raw bytes (u1) or decoded elements."""
        self._check()
        return self._data

    def element(self, i: int):
        """Entry i (local index) of this slice."""
        self._check()
        if not 0 <= i < self.entry_count:
            raise EntryRangeError(f"local index {i} outside 0..{self.entry_count - 1}")
        if self.offsets is not None:
            return self._data[self.offsets[i] : self.offsets[i + 1]]
        return self._data[i]

    def __getitem__(self, i: int):
        return self.element(i)

    def __len__(self) -> int:
        return self.entry_count

    def __repr__(self):
        return (
            f"BulkSlice({self.branch_name!r}, entries [{self.first_entry}, "
            f"{self.first_entry + self.entry_count}), {self.mode.value}, {self.ownership.value})"
        )


class ReaderStats:
    """Instrumentation counters used by benchmarks and mechanism tests."""

    __slots__ = (
        "decompress_calls", "bulk_decode_passes", "proxy_constructions",
        "cache_hits", "bytes_read", "unzip_seconds",
    )

    def __init__(self):
        self.reset()

    def reset(self):
        self.decompress_calls = 0
        self.bulk_decode_passes = 0
        self.proxy_constructions = 0
        self.cache_hits = 0
        self.bytes_read = 0
        self.unzip_seconds = 0.0

    def snapshot(self) -> dict:
        return {name: getattr(self, name) for name in self.__slots__}


class _BranchState:
    """Per-branch decode machinery and basket lookup tables."""

    __slots__ = ("desc", "metas", "starts", "single", "multi", "width", "elems", "last")

    def __init__(self, desc: BranchDescriptor, metas: list[BasketMeta]):
        self.desc = desc
        self.metas = metas
        self.starts = [m.first_entry for m in metas]
        self.width = desc.element.width
        ch = desc.element.struct_char
        self.single = struct.Struct(f">{ch}")
        if desc.shape.kind is ShapeKind.fixed_array and desc.shape.fixed_len <= _STRUCT_DECODE_MAX:
            self.multi = struct.Struct(f">{desc.shape.fixed_len}{ch}")
        else:
            self.multi = None
        self.elems = 0 if desc.shape.is_var else desc.shape.elements_per_entry()
        # (first_entry, end_entry, meta, payload) of the last basket touched;
        # payload is immutable bytes, so holding it here is safe across evictions
        self.last = (0, 0, None, None)


class BkioReader:
    """An open BKIO file; see open_reader."""

    def __init__(self, path: str):
        self.path = path
        self.tables: FileTables = decode_file(path)
        self._fd = os.open(path, os.O_RDONLY)
        self._closed = False
        self._lock = threading.Lock()
        self._cache: dict[tuple[int, int], bytes] = {}
        self._cluster_members: dict[int, list[tuple[int, int]]] = {}
        self._cluster_order: list[int] = []  # recency, oldest first
        self._generation = 0
        self._current_cluster = -1
        self._prefetcher = None
        self.stats = ReaderStats()

        per_branch: dict[int, list[BasketMeta]] = {b.branch_id: [] for b in self.tables.branches}
        for m in self.tables.baskets:
            per_branch[m.branch_id].append(m)
        self._branches = {}
        for b in self.tables.branches:
            metas = sorted(per_branch[b.branch_id], key=lambda m: m.first_entry)
            st = _BranchState(b, metas)
            self._branches[b.name] = st
            self._branches[b.branch_id] = st

        self._baskets_by_cluster: dict[int, list[BasketMeta]] = {}
        for m in self.tables.baskets:
            self._baskets_by_cluster.setdefault(self._cluster_of_basket(m), []).append(m)
        for metas in self._baskets_by_cluster.values():
            metas.sort(key=lambda m: m.file_offset)

    # -- bookkeeping ----------------------------------------------------

    @property
    def total_entries(self) -> int:
        return self.tables.total_entries

    @property
    def branch_names(self) -> list[str]:
        return [b.name for b in self.tables.branches]

    @property
    def clusters(self):
        return self.tables.clusters

    def branch(self, key) -> BranchDescriptor:
        return self._state(key).desc

    def baskets_of(self, key) -> list[BasketMeta]:
        return list(self._state(key).metas)

    def baskets_in_cluster(self, k: int) -> list[BasketMeta]:
        return list(self._baskets_by_cluster.get(k, ()))

    def _state(self, key) -> _BranchState:
        try:
            return self._branches[key]
        except KeyError:
            raise KeyError(f"no branch {key!r}") from None

    def _check_open(self):
        if self._closed:
            raise ReaderClosedError("reader is closed")

    def _cluster_of_basket(self, meta: BasketMeta) -> int:
        return self.tables.clusters.cluster_of(meta.first_entry)

    # -- prefetch -------------------------------------------------------

    def enable_prefetch(self, config=None):
        """Attach an asynchronous unzipping pool (see bkio.prefetch)."""
        from .prefetch import PrefetchConfig, Prefetcher

        self._check_open()
        if self._prefetcher is not None:
            return self._prefetcher
        self._prefetcher = Prefetcher(self, config or PrefetchConfig())
        return self._prefetcher

    @property
    def prefetcher(self):
        return self._prefetcher

    # -- payload cache ----------------------------------------------------

    def _touch_locked(self, cluster: int) -> None:
        order = self._cluster_order
        if order and order[-1] == cluster:
            return
        if cluster in order:
            order.remove(cluster)
        order.append(cluster)
        while len(order) > _CACHE_CLUSTERS:
            evicted = order.pop(0)
            for key in self._cluster_members.pop(evicted, ()):
                self._cache.pop(key, None)
            self._generation += 1

    def _insert_locked(self, key, payload: bytes, cluster: int) -> None:
        if key not in self._cache:
            self._cache[key] = payload
            self._cluster_members.setdefault(cluster, []).append(key)
        self._touch_locked(cluster)

    def _load_basket(self, meta: BasketMeta) -> bytes:
        """Read, verify, and decompress one basket; insert into the cache.

        Runs on the calling thread or on a prefetch worker.
        """
        record = os.pread(self._fd, RECORD_HEADER_SIZE + meta.compressed_size, meta.file_offset)
        if len(record) != RECORD_HEADER_SIZE + meta.compressed_size:
            raise InvariantViolationError(
                f"basket at offset {meta.file_offset}: short read, file damaged"
            )
        bid, first, count, _codec, _level, usize, csize = RECORD_HEADER.unpack_from(record)
        if (bid, first, count, usize, csize) != (
            meta.branch_id, meta.first_entry, meta.entry_count,
            meta.uncompressed_size, meta.compressed_size,
        ):
            raise InvariantViolationError(
                f"basket at offset {meta.file_offset}: record header disagrees with footer"
            )
        payload, cstats = codecs.decompress(
            record[RECORD_HEADER_SIZE:], meta.spec, meta.uncompressed_size
        )
        key = (meta.branch_id, meta.first_entry)
        with self._lock:
            self.stats.decompress_calls += 1
            self.stats.bytes_read += len(record)
            self.stats.unzip_seconds += cstats.elapsed
            self._insert_locked(key, payload, self._cluster_of_basket(meta))
        return payload

    def _payload_for(self, meta: BasketMeta) -> bytes:
        self._check_open()
        cluster = self._cluster_of_basket(meta)
        if cluster != self._current_cluster:
            self._current_cluster = cluster
            if self._prefetcher is not None:
                self._prefetcher.on_enter_cluster(cluster)
        key = (meta.branch_id, meta.first_entry)
        with self._lock:
            payload = self._cache.get(key)
            if payload is not None:
                self.stats.cache_hits += 1
                self._touch_locked(cluster)
                return payload
        if self._prefetcher is not None:
            payload = self._prefetcher.wait_basket(key)
            if payload is not None:
                return payload
        return self._load_basket(meta)

    # -- per-entry access -------------------------------------------------

    def _locate(self, st: _BranchState, entry: int) -> BasketMeta:
        i = bisect_right(st.starts, entry) - 1
        if i < 0:
            raise EntryRangeError(f"entry {entry} before first basket")
        return st.metas[i]

    def get_entry(self, entry: int, branches: Iterable[str] | None = None) -> EntryProxy:
        """Decode one entry of the requested branches into a proxy."""
        if not 0 <= entry < self.total_entries:
            raise EntryRangeError(
                f"entry {entry} outside [0, {self.total_entries})"
            )
        names = self.branch_names if branches is None else branches
        states = self._branches
        vals = {}
        for name in names:
            st = states[name]
            first, end, meta, payload = st.last
            if not (first <= entry < end):
                meta = self._locate(st, entry)
                payload = self._payload_for(meta)
                first = meta.first_entry
                st.last = (first, meta.end_entry, meta, payload)
            vals[name] = self._decode_one(st, meta, payload, entry - first)
        self.stats.proxy_constructions += 1
        return EntryProxy(entry, vals)

    def _decode_one(self, st: _BranchState, meta: BasketMeta, payload: bytes, local: int):
        kind = st.desc.shape.kind
        if kind is ShapeKind.scalar:
            return st.single.unpack_from(payload, local * st.width)[0]
        if kind is ShapeKind.fixed_array:
            off = local * st.elems * st.width
            if st.multi is not None:
                return st.multi.unpack_from(payload, off)
            return np.frombuffer(
                payload, dtype=st.desc.element.be_dtype, count=st.elems,
                offset=off,
            ).astype(st.desc.element.native_dtype)
        n = meta.entry_count
        offs = np.frombuffer(payload, dtype=">u4", count=n + 1)
        base = 4 * (n + 1)
        e0, e1 = int(offs[local]), int(offs[local + 1])
        return np.frombuffer(
            payload, dtype=st.desc.element.be_dtype, count=e1 - e0,
            offset=base + e0 * st.width,
        ).astype(st.desc.element.native_dtype)

    def iter_entries(self, branches: Iterable[str] | None = None):
        """Yield EntryProxy for every entry in order (the slow baseline)."""
        names = tuple(self.branch_names if branches is None else branches)
        for entry in range(self.total_entries):
            yield self.get_entry(entry, names)

    # -- bulk access --------------------------------------------------------

    def read_basket_bulk(
        self,
        branch,
        basket_index: int,
        mode: DeliveryMode = DeliveryMode.decoded_native,
        ownership: Ownership = Ownership.view,
    ) -> BulkSlice:
        """Deliver all entries of one on-disk basket in a single call."""
        st = self._state(branch)
        if st.desc.shape.is_var:
            raise UnsupportedShapeError(
                f"bulk delivery does not support var_array branch {st.desc.name!r}"
            )
        if not 0 <= basket_index < len(st.metas):
            raise EntryRangeError(
                f"basket {basket_index} outside 0..{len(st.metas) - 1} of branch {st.desc.name!r}"
            )
        meta = st.metas[basket_index]
        payload = self._payload_for(meta)
        stamp = self._generation
        elem = st.desc.element

        if mode is DeliveryMode.raw_serialized:
            data = np.frombuffer(payload, dtype="u1")
            if ownership is Ownership.copy:
                data = data.copy()
        else:
            data = np.frombuffer(payload, dtype=elem.be_dtype)
            if st.desc.shape.kind is ShapeKind.fixed_array:
                data = data.reshape(meta.entry_count, st.elems)
            if ownership is Ownership.copy:
                data = data.astype(elem.native_dtype)
                with self._lock:
                    self.stats.bulk_decode_passes += 1
        return BulkSlice(
            st.desc, meta.first_entry, meta.entry_count, mode, ownership,
            data, reader=self if ownership is Ownership.view else None, stamp=stamp,
        )

    def read_range_aligned(
        self,
        branches: Iterable[str] | None = None,
        start: int = 0,
        stop: int | None = None,
        *,
        force_copy: bool = False,
    ) -> dict[str, BulkSlice]:
        """Index-aligned contiguous decoded arrays for an entry range.

        Per branch: a zero-copy view when one basket covers the whole
        range (and force_copy is off), else a copy stitched across
        baskets. var_array branches always copy and carry an offsets
        array alongside the flat values.
        """
        stop = self.total_entries if stop is None else stop
        if not (0 <= start <= stop <= self.total_entries):
            raise EntryRangeError(
                f"range [{start}, {stop}) outside [0, {self.total_entries})"
            )
        names = self.branch_names if branches is None else list(branches)
        return {name: self._range_column(name, start, stop, force_copy) for name in names}

    def _range_column(self, name: str, start: int, stop: int, force_copy: bool) -> BulkSlice:
        st = self._state(name)
        desc = st.desc
        n = stop - start
        elem = desc.element

        if desc.shape.is_var:
            return self._range_var(st, start, stop)

        if n == 0:
            shape = (0,) if desc.shape.kind is ShapeKind.scalar else (0, st.elems)
            data = np.empty(shape, dtype=elem.native_dtype)
            return BulkSlice(desc, start, 0, DeliveryMode.decoded_native, Ownership.copy, data)

        first = self._locate(st, start)
        if not force_copy and first.end_entry >= stop:
            payload = self._payload_for(first)
            stamp = self._generation
            data = np.frombuffer(payload, dtype=elem.be_dtype)
            if desc.shape.kind is ShapeKind.fixed_array:
                data = data.reshape(first.entry_count, st.elems)
            data = data[start - first.first_entry : stop - first.first_entry]
            return BulkSlice(
                desc, start, n, DeliveryMode.decoded_native, Ownership.view,
                data, reader=self, stamp=stamp,
            )

        shape = (n,) if desc.shape.kind is ShapeKind.scalar else (n, st.elems)
        out = np.empty(shape, dtype=elem.native_dtype)
        entry = start
        while entry < stop:
            meta = self._locate(st, entry)
            payload = self._payload_for(meta)
            lo = entry - meta.first_entry
            hi = min(stop, meta.end_entry) - meta.first_entry
            chunk = np.frombuffer(payload, dtype=elem.be_dtype, count=(hi - lo) * st.elems,
                                  offset=lo * st.elems * st.width)
            if desc.shape.kind is ShapeKind.fixed_array:
                chunk = chunk.reshape(hi - lo, st.elems)
            out[entry - start : entry - start + (hi - lo)] = chunk
            with self._lock:
                self.stats.bulk_decode_passes += 1
            entry = meta.first_entry + hi
        return BulkSlice(desc, start, n, DeliveryMode.decoded_native, Ownership.copy, out)

    def _range_var(self, st: _BranchState, start: int, stop: int) -> BulkSlice:
        desc = st.desc
        counts = []
        values = []
        entry = start
        while entry < stop:
            meta = self._locate(st, entry)
            payload = self._payload_for(meta)
            nb = meta.entry_count
            offs = np.frombuffer(payload, dtype=">u4", count=nb + 1).astype(np.int64)
            base = 4 * (nb + 1)
            lo = entry - meta.first_entry
            hi = min(stop, meta.end_entry) - meta.first_entry
            e0, e1 = int(offs[lo]), int(offs[hi])
            values.append(
                np.frombuffer(payload, dtype=desc.element.be_dtype, count=e1 - e0,
                              offset=base + e0 * st.width).astype(desc.element.native_dtype)
            )
            counts.append(np.diff(offs[lo : hi + 1]))
            with self._lock:
                self.stats.bulk_decode_passes += 1
            entry = meta.first_entry + hi
        n = stop - start
        if counts:
            offsets = np.concatenate([[0], np.cumsum(np.concatenate(counts))]).astype(np.int64)
            flat = np.concatenate(values) if values else np.empty(0, dtype=desc.element.native_dtype)
        else:
            offsets = np.zeros(1, dtype=np.int64)
            flat = np.empty(0, dtype=desc.element.native_dtype)
        return BulkSlice(
            desc, start, n, DeliveryMode.decoded_native, Ownership.copy,
            flat, offsets=offsets,
        )

    # -- lifecycle -----------------------------------------------------------

    def close(self):
        if self._closed:
            return
        self._closed = True
        if self._prefetcher is not None:
            self._prefetcher.shutdown(drain=False)
        with self._lock:
            self._cache.clear()
            self._cluster_members.clear()
            self._cluster_order.clear()
            self._generation += 1
        os.close(self._fd)

    def __enter__(self) -> "BkioReader":
        return self

    def __exit__(self, exc_type, exc, tb):
        self.close()


def open_reader(path: str) -> BkioReader:
    """Open a BKIO v1 file for reading; tables are decoded, payloads are lazy."""
    return BkioReader(path)
