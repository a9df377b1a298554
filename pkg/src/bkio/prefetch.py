"""Asynchronous parallel unzipping of basket payloads.

When the consumer crosses into a new event cluster, that cluster's
compressed baskets are partitioned into tasks of roughly 100 KB of
compressed data each and queued on a worker pool; completed payloads
land in the reader's decompressed cache. The consumer blocks only when
it asks for a basket whose decompression has not finished, and a basket
nobody scheduled is decompressed inline on the calling thread.

The codecs release the GIL inside the raw (de)compression calls, so the
pool gets real parallelism.
"""

from __future__ import annotations

import enum
import os
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

from .errors import PoolShutdownError
from .format import BasketMeta

DEFAULT_TASK_TARGET_BYTES = 100 * 1024

BasketKey = tuple[int, int]  # (branch_id, first_entry)


@dataclass(frozen=True)
class PrefetchConfig:
    """Knobs: worker count, task packing target, cluster lookahead."""

    workers: int | None = None  # default: host logical cores
    task_target_bytes: int = DEFAULT_TASK_TARGET_BYTES
    lookahead_clusters: int = 1
    delay_hook: Callable[[BasketKey], None] | None = None  # test instrumentation

    def __post_init__(self):
        if self.workers is not None and self.workers < 1:
            raise ValueError("workers must be >= 1")
        if self.task_target_bytes < 1:
            raise ValueError("task_target_bytes must be >= 1")
        if self.lookahead_clusters < 0:
            raise ValueError("lookahead_clusters must be >= 0")


@dataclass(frozen=True)
class UnzipTask:
    """A group of baskets one worker decompresses together."""

    keys: tuple[BasketKey, ...]
    total_compressed: int


def partition_baskets(
    baskets: Sequence[BasketMeta], target: int = DEFAULT_TASK_TARGET_BYTES
) -> list[UnzipTask]:
    """Greedily pack one cluster's baskets, in file-offset order, into
    tasks of at least `target` compressed bytes (the last may be smaller).
    Every basket lands in exactly one task."""
    if target < 1:
        raise ValueError("target must be >= 1")
    tasks: list[UnzipTask] = []
    keys: list[BasketKey] = []
    acc = 0
    for meta in sorted(baskets, key=lambda m: m.file_offset):
        keys.append((meta.branch_id, meta.first_entry))
        acc += meta.compressed_size
        if acc >= target:
            tasks.append(UnzipTask(tuple(keys), acc))
            keys, acc = [], 0
    if keys:
        tasks.append(UnzipTask(tuple(keys), acc))
    return tasks


class BasketStatus(enum.Enum):
    queued = 1
    running = 2
    ready = 3
    failed = 4


class _Slot:
    __slots__ = ("status", "event", "error")

    def __init__(self):
        self.status = BasketStatus.queued
        self.event = threading.Event()
        self.error = None


class Prefetcher:
    """Prefetch state for one reader: per-basket status over a worker pool."""

    def __init__(self, reader, config: PrefetchConfig | None = None):
        self.config = config or PrefetchConfig()
        self.worker_count = self.config.workers or os.cpu_count() or 2
        self._reader = reader
        self._meta_by_key: dict[BasketKey, BasketMeta] = {
            (m.branch_id, m.first_entry): m for m in reader.tables.baskets
        }
        self._pool = ThreadPoolExecutor(
            max_workers=self.worker_count, thread_name_prefix="bkio-unzip"
        )
        self._lock = threading.Lock()
        self._slots: dict[BasketKey, _Slot] = {}
        self._scheduled_clusters: set[int] = set()
        self._shutdown = False

    # -- scheduling -----------------------------------------------------

    def on_enter_cluster(self, cluster: int) -> None:
        """Consumer crossed into `cluster`: schedule it plus the lookahead."""
        if self._shutdown:
            return
        last = min(
            cluster + self.config.lookahead_clusters,
            max(self._reader.tables.clusters.n_clusters - 1, 0),
        )
        for k in range(cluster, last + 1):
            try:
                self.schedule_cluster(k)
            except PoolShutdownError:
                return

    def schedule_cluster(self, cluster: int) -> None:
        """Queue all of one cluster's baskets as ~100KB tasks; idempotent.

        Returns without waiting; completed baskets land in the reader's
        decompressed cache.
        """
        if not 0 <= cluster < max(self._reader.tables.clusters.n_clusters, 1):
            raise IndexError(f"cluster {cluster} out of range")
        with self._lock:
            if self._shutdown:
                raise PoolShutdownError("prefetch pool is shut down")
            if cluster in self._scheduled_clusters:
                return
            self._scheduled_clusters.add(cluster)
            baskets = self._reader.baskets_in_cluster(cluster)
            tasks = partition_baskets(baskets, self.config.task_target_bytes)
            for task in tasks:
                for key in task.keys:
                    if key not in self._slots:
                        self._slots[key] = _Slot()
            for task in tasks:
                self._pool.submit(self._run_task, task)

    def _set_status(self, slot: _Slot, status: BasketStatus, error=None) -> None:
        with self._lock:
            if status.value < slot.status.value:
                raise AssertionError(
                    f"status may not go backwards: {slot.status} -> {status}"
                )
            slot.status = status
            if error is not None:
                slot.error = error
        if status in (BasketStatus.ready, BasketStatus.failed):
            slot.event.set()

    def _run_task(self, task: UnzipTask) -> None:
        hook = self.config.delay_hook
        for key in task.keys:
            slot = self._slots[key]
            if slot.event.is_set():
                continue
            try:
                self._set_status(slot, BasketStatus.running)
                if hook is not None:
                    hook(key)
                self._reader._load_basket(self._meta_by_key[key])
            except Exception as exc:  # surfaced on wait_basket; never lose the wakeup
                with self._lock:
                    slot.status = BasketStatus.failed
                    slot.error = exc
                slot.event.set()
            else:
                self._set_status(slot, BasketStatus.ready)

    # -- consumption ------------------------------------------------------

    def status(self, key: BasketKey) -> BasketStatus | None:
        """Current status, or None if the basket was never scheduled."""
        slot = self._slots.get(key)
        return slot.status if slot else None

    def wait_basket(self, key: BasketKey) -> bytes:
        """Block until `key` is decompressed; returns its payload.

        A basket that was never scheduled is decompressed inline on the
        calling thread. A failed basket re-raises the worker's error.
        """
        meta = self._meta_by_key.get(key)
        if meta is None:
            raise KeyError(f"no basket {key!r}")
        slot = self._slots.get(key)
        if slot is None:
            return self._reader._load_basket(meta)
        slot.event.wait()
        if slot.status is BasketStatus.failed:
            raise slot.error
        reader = self._reader
        with reader._lock:
            payload = reader._cache.get(key)
        if payload is not None:
            return payload
        return reader._load_basket(meta)  # evicted before consumption

    # -- lifecycle ---------------------------------------------------------

    def shutdown(self, drain: bool = True) -> None:
        """Stop the pool. drain=True finishes queued work; drain=False
        cancels queued tasks and fails their baskets deterministically."""
        with self._lock:
            if self._shutdown:
                return
            self._shutdown = True
        if drain:
            self._pool.shutdown(wait=True)
        else:
            # Cancels queued tasks, waits out the running ones, then fails
            # every basket left unfinished so no waiter can hang.
            self._pool.shutdown(wait=True, cancel_futures=True)
            with self._lock:
                for slot in self._slots.values():
                    if not slot.event.is_set():
                        slot.status = BasketStatus.failed
                        slot.error = PoolShutdownError(
                            "prefetch pool shut down before this basket was unzipped"
                        )
                        slot.event.set()

    def __enter__(self) -> "Prefetcher":
        return self

    def __exit__(self, exc_type, exc, tb):
        self.shutdown(drain=exc_type is None)
