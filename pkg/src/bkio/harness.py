"""Benchmark harness: timed scans over BKIO files and CSV emission.

Each method computes a physics reduction (momentum sum, or energy sum on
the copy path) so the work cannot be optimized away, and every result
carries wall time, process CPU time, and the decompression time
aggregated from the codec probes. The median repetition is reported.
"""

from __future__ import annotations

import csv
import math
import time
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import lz4block
from .errors import BenchmarkError, UnsupportedShapeError
from .format import ShapeKind
from .prefetch import PrefetchConfig
from .reader import BkioReader, DeliveryMode, Ownership

METHODS = ("per_entry", "bulk_raw", "bulk_decoded", "range_copy")
DIMUON_BRANCHES = ("px", "py", "pz", "mass")

CSV_HEADER = ["method", "codec", "events", "wall_ms", "cpu_ms", "unzip_ms",
              "events_per_sec", "bytes"]


@dataclass(frozen=True)
class BenchResult:
    method: str
    codec: str
    events: int
    wall_s: float
    cpu_s: float
    unzip_s: float
    events_per_sec: float
    bytes_read: int
    reduction: float
    reduction_kind: str  # "psum" | "esum" | "sum"
    threads: int = 1

    def __post_init__(self):
        # sanity bounds; small slack for clock granularity
        slack = 0.05 * self.cpu_s + 0.02
        if self.unzip_s > self.cpu_s + slack:
            raise BenchmarkError(
                f"unzip time {self.unzip_s:.3f}s exceeds CPU time {self.cpu_s:.3f}s"
            )
        if self.cpu_s > self.wall_s * self.threads + slack:
            raise BenchmarkError(
                f"CPU time {self.cpu_s:.3f}s exceeds wall x threads "
                f"({self.wall_s:.3f}s x {self.threads})"
            )


def file_codec_label(reader: BkioReader) -> str:
    """Dominant basket codec of a file (fallback baskets may differ)."""
    counts: dict[str, int] = {}
    for m in reader.tables.baskets:
        counts[m.spec.label] = counts.get(m.spec.label, 0) + 1
    if not counts:
        return "none-0"
    return max(counts.items(), key=lambda kv: kv[1])[0]


def _is_dimuon(reader: BkioReader) -> bool:
    return all(name in reader.tables.branch_by_name for name in DIMUON_BRANCHES)


# -- method scans -----------------------------------------------------------


def _scan_per_entry(reader: BkioReader) -> tuple[float, str]:
    if _is_dimuon(reader):
        acc = 0.0
        sqrt = math.sqrt
        names = ("px", "py", "pz")
        get = reader.get_entry
        for entry in range(reader.total_entries):
            p = get(entry, names)
            x, y, z = p["px"], p["py"], p["pz"]
            acc += sqrt(x * x + y * y + z * z)
        return acc, "psum"
    name = reader.branch_names[0]
    desc = reader.branch(name)
    acc = 0.0
    get = reader.get_entry
    if desc.shape.kind is ShapeKind.scalar:
        for entry in range(reader.total_entries):
            acc += get(entry, (name,))[name]
    else:
        for entry in range(reader.total_entries):
            vals = get(entry, (name,))[name]
            acc += sum(vals) if isinstance(vals, tuple) else float(np.sum(vals, dtype=np.float64))
    return acc, "sum"


def _aligned_basket_metas(reader: BkioReader, names: Sequence[str]) -> int:
    per = [reader.baskets_of(n) for n in names]
    n0 = len(per[0])
    for metas in per[1:]:
        if len(metas) != n0 or any(
            (a.first_entry, a.entry_count) != (b.first_entry, b.entry_count)
            for a, b in zip(metas, per[0])
        ):
            raise BenchmarkError(
                f"branches {names} have misaligned baskets; bulk momentum scan "
                "requires identical basket boundaries"
            )
    return n0


def _scan_bulk(reader: BkioReader, mode: DeliveryMode) -> tuple[float, str]:
    from .reader import decode_elements

    acc = 0.0
    if _is_dimuon(reader):
        names = ("px", "py", "pz")
        n_baskets = _aligned_basket_metas(reader, names)
        for i in range(n_baskets):
            comps = []
            for name in names:
                sl = reader.read_basket_bulk(name, i, mode, Ownership.copy)
                if mode is DeliveryMode.raw_serialized:
                    arr = decode_elements(sl.values, reader.branch(name).element)
                else:
                    arr = sl.values
                comps.append(arr.astype(np.float64, copy=False))
            x, y, z = comps
            acc += float(np.sqrt(x * x + y * y + z * z).sum())
        return acc, "psum"
    name = reader.branch_names[0]
    desc = reader.branch(name)
    if desc.shape.kind is ShapeKind.var_array:
        raise BenchmarkError("bulk methods do not support var_array branches")
    for i in range(len(reader.baskets_of(name))):
        sl = reader.read_basket_bulk(name, i, mode, Ownership.copy)
        arr = decode_elements(sl.values, desc.element) if mode is DeliveryMode.raw_serialized else sl.values
        acc += float(np.sum(arr, dtype=np.float64))
    return acc, "sum"


def _cluster_ranges(reader: BkioReader):
    start = 0
    for b in reader.tables.clusters.boundaries:
        yield start, b
        start = b
    if start < reader.total_entries:
        yield start, reader.total_entries


def _scan_range_copy(reader: BkioReader) -> tuple[float, str]:
    acc = 0.0
    if _is_dimuon(reader):
        for start, stop in _cluster_ranges(reader):
            cols = reader.read_range_aligned(DIMUON_BRANCHES, start, stop, force_copy=True)
            x = cols["px"].values.astype(np.float64, copy=False)
            y = cols["py"].values.astype(np.float64, copy=False)
            z = cols["pz"].values.astype(np.float64, copy=False)
            m = cols["mass"].values.astype(np.float64, copy=False)
            acc += float(np.sqrt(x * x + y * y + z * z + m * m).sum())
        return acc, "esum"
    name = reader.branch_names[0]
    for start, stop in _cluster_ranges(reader):
        col = reader.read_range_aligned((name,), start, stop, force_copy=True)[name]
        acc += float(np.sum(col.values, dtype=np.float64))
    return acc, "sum"


_SCANS = {
    "per_entry": lambda r: _scan_per_entry(r),
    "bulk_raw": lambda r: _scan_bulk(r, DeliveryMode.raw_serialized),
    "bulk_decoded": lambda r: _scan_bulk(r, DeliveryMode.decoded_native),
    "range_copy": lambda r: _scan_range_copy(r),
}


def run_benchmark(
    path: str,
    method: str,
    *,
    prefetch: bool = False,
    threads: int | None = None,
    repetitions: int = 3,
    task_target_bytes: int = 100 * 1024,
    codec_label: str | None = None,
) -> BenchResult:
    """Scan `path` with one access method; report the median repetition."""
    if method not in _SCANS:
        raise BenchmarkError(f"unknown method {method!r}; pick from {METHODS}")
    if repetitions < 1:
        raise BenchmarkError("repetitions must be >= 1")

    reps = []
    label = codec_label
    worker_count = 1
    for _ in range(repetitions):
        reader = BkioReader(path)
        try:
            if label is None:
                label = file_codec_label(reader)
            if prefetch:
                pf = reader.enable_prefetch(
                    PrefetchConfig(workers=threads, task_target_bytes=task_target_bytes)
                )
                worker_count = 1 + pf.worker_count
            reader.stats.reset()
            cpu0 = time.process_time()
            t0 = time.perf_counter()
            reduction, kind = _SCANS[method](reader)
            wall = time.perf_counter() - t0
            cpu = time.process_time() - cpu0
            reps.append(
                (wall, cpu, reader.stats.unzip_seconds, reader.stats.bytes_read,
                 reduction, kind, reader.total_entries)
            )
        except UnsupportedShapeError as exc:
            raise BenchmarkError(str(exc)) from exc
        finally:
            reader.close()

    reps.sort(key=lambda r: r[0])
    wall, cpu, unzip, nbytes, reduction, kind, events = reps[len(reps) // 2]
    method_label = method + ("+prefetch" if prefetch else "")
    return BenchResult(
        method=method_label,
        codec=label,
        events=events,
        wall_s=wall,
        cpu_s=cpu,
        unzip_s=unzip,
        events_per_sec=events / wall if wall > 0 else float("inf"),
        bytes_read=nbytes,
        reduction=reduction,
        reduction_kind=kind,
        threads=worker_count,
    )


# -- CSV --------------------------------------------------------------------


def emit_csv(results: Sequence[BenchResult], path: str, metadata: dict | None = None) -> None:
    """RFC-4180 rows under the fixed header; optional leading # metadata lines."""
    if not results:
        raise BenchmarkError("no results to write")
    with open(path, "w", newline="") as f:
        if metadata:
            for k in sorted(metadata):
                f.write(f"# {k}={metadata[k]}\n")
        w = csv.writer(f)
        w.writerow(CSV_HEADER)
        for r in results:
            w.writerow([
                r.method,
                r.codec,
                r.events,
                repr(r.wall_s * 1e3),
                repr(r.cpu_s * 1e3),
                repr(r.unzip_s * 1e3),
                repr(r.events_per_sec),
                r.bytes_read,
            ])


def read_csv(path: str) -> list[dict]:
    """Parse an emit_csv file back into dicts (skipping metadata lines)."""
    with open(path, newline="") as f:
        rows = [line for line in f if not line.startswith("#")]
    out = []
    for rec in csv.DictReader(rows):
        out.append({
            "method": rec["method"],
            "codec": rec["codec"],
            "events": int(rec["events"]),
            "wall_ms": float(rec["wall_ms"]),
            "cpu_ms": float(rec["cpu_ms"]),
            "unzip_ms": float(rec["unzip_ms"]),
            "events_per_sec": float(rec["events_per_sec"]),
            "bytes": int(rec["bytes"]),
        })
    return out


def emit_codec_csv(points, path: str, metadata: dict | None = None) -> None:
    """Codec-matrix table: ratios and decompression speeds vs deflate-6."""
    with open(path, "w", newline="") as f:
        if metadata:
            for k in sorted(metadata):
                f.write(f"# {k}={metadata[k]}\n")
        w = csv.writer(f)
        w.writerow(["codec", "ratio", "decomp_mb_per_s", "rel_ratio", "rel_speed"])
        for p in points:
            w.writerow([
                p.spec.label,
                repr(p.compression_ratio),
                repr(p.decompression_throughput / 1e6),
                repr(p.relative_ratio),
                repr(p.relative_throughput),
            ])


# -- kernel comparison (compiled vs pure LZ4) -------------------------------


@dataclass(frozen=True)
class KernelPoint:
    backend: str
    operation: str
    mb_per_s: float


def bench_kernels(size: int = 4 << 20, repetitions: int = 3, seed: int = 7) -> list[KernelPoint]:
    """Throughput of the compiled LZ4 kernel vs the pure-Python fallback."""
    rng = np.random.default_rng(seed)
    data = (np.round(rng.standard_normal(size // 4, dtype=np.float32) * 8) / 8).astype(">f4").tobytes()
    backends = [("pure", lz4block.pure)]
    if lz4block.compiled is not None:
        backends.insert(0, ("compiled", lz4block.compiled))
    points = []
    for name, mod in backends:
        scale = 1 if name == "compiled" else max(1, size // (64 << 10))
        payload = data[: len(data) // scale]  # pure backend gets a smaller bite
        frame = mod.compress(payload)
        for op, fn in (
            ("compress", lambda: mod.compress(payload)),
            ("decompress", lambda: mod.decompress(frame, len(payload))),
        ):
            times = []
            for _ in range(repetitions):
                t0 = time.perf_counter()
                fn()
                times.append(time.perf_counter() - t0)
            times.sort()
            points.append(KernelPoint(name, op, len(payload) / times[len(times) // 2] / 1e6))
    return points
