"""Uniform compression behind CompressionSpec, with timing probes.

The timing in CodecStats wraps only the raw codec call, so the benchmark
harness can separate decompression cost from the rest of the CPU work.
Deflate is stdlib zlib; lz4/lz4hc are this package's own block codec
(compiled kernel when built, pure-Python fallback otherwise).

compress() applies the store-uncompressed fallback: when a codec fails
to strictly shrink the payload, the frame is the payload itself and the
effective spec comes back as none-0, so a basket never inflates.
"""

from __future__ import annotations

import time
import zlib
from dataclasses import dataclass
from typing import Sequence

from . import lz4block
from .errors import CodecError, CorruptFrameError, SizeMismatchError
from .format import Codec, CompressionSpec, STORED

# Slack so the lz4 decoder can overrun the expected size a little and we
# can report size-mismatch instead of mistaking it for corruption.
_SIZE_PROBE_SLACK = 64


@dataclass(frozen=True)
class CodecStats:
    """Byte counts and wall-clock duration of one codec call."""

    bytes_in: int
    bytes_out: int
    elapsed: float

    def __post_init__(self):
        if self.bytes_in < 0 or self.bytes_out < 0 or self.elapsed < 0:
            raise ValueError("CodecStats fields must be >= 0")

    @property
    def throughput(self) -> float:
        """Decompressed-side bytes per second (caller picks the side)."""
        return self.bytes_out / self.elapsed if self.elapsed > 0 else float("inf")


@dataclass(frozen=True)
class CompressResult:
    frame: bytes
    spec: CompressionSpec  # effective spec; none-0 when stored verbatim
    stats: CodecStats


def _raw_compress(payload: bytes, spec: CompressionSpec) -> bytes:
    codec = spec.codec
    try:
        if codec is Codec.none:
            return payload
        if codec is Codec.deflate:
            return zlib.compress(payload, spec.level)
        if codec is Codec.lz4:
            return lz4block.compress(payload)
        if codec is Codec.lz4hc:
            return lz4block.compress_hc(payload, spec.level)
    except CodecError:
        raise
    except Exception as exc:
        raise CodecError(f"{codec.value}: compression failed: {exc}") from exc
    raise CodecError(f"unknown codec {codec}")


def compress(payload: bytes, spec: CompressionSpec) -> CompressResult:
    """Compress one basket payload, falling back to verbatim storage.

    The returned spec is what must be recorded in BasketMeta; it is
    none-0 whenever the codec did not strictly shrink the payload.
    """
    t0 = time.perf_counter()
    frame = _raw_compress(payload, spec)
    elapsed = time.perf_counter() - t0
    if spec.codec is not Codec.none and len(frame) >= len(payload):
        frame, spec = payload, STORED
    return CompressResult(frame, spec, CodecStats(len(payload), len(frame), elapsed))


def decompress(frame: bytes, spec: CompressionSpec, expected_size: int) -> tuple[bytes, CodecStats]:
    """Decode a frame and check it yields exactly expected_size bytes.

    Raises CorruptFrameError for malformed frames and SizeMismatchError
    when a frame decodes cleanly to the wrong size.
    """
    codec = spec.codec
    t0 = time.perf_counter()
    try:
        if codec is Codec.none:
            out = frame
        elif codec is Codec.deflate:
            out = zlib.decompress(frame)
        elif codec in (Codec.lz4, Codec.lz4hc):
            out = lz4block.decompress(frame, expected_size + _SIZE_PROBE_SLACK)
        else:
            raise CodecError(f"unknown codec {codec}")
    except CorruptFrameError:
        raise
    except zlib.error as exc:
        raise CorruptFrameError(f"deflate: {exc}") from exc
    elapsed = time.perf_counter() - t0
    if len(out) != expected_size:
        raise SizeMismatchError(
            f"{spec.label}: frame decoded to {len(out)} bytes, expected {expected_size}"
        )
    return out, CodecStats(len(frame), len(out), elapsed)


@dataclass(frozen=True)
class CodecPoint:
    """One row of the codec comparison table."""

    spec: CompressionSpec
    compression_ratio: float  # raw bytes / compressed bytes
    decompression_throughput: float  # raw bytes per second
    relative_ratio: float  # vs deflate-6
    relative_throughput: float  # vs deflate-6


_BASELINE = CompressionSpec.of("deflate", 6)


def ratio_and_speed(
    dataset: bytes,
    specs: Sequence[CompressionSpec],
    *,
    repetitions: int = 3,
) -> list[CodecPoint]:
    """Compression ratio and decompression throughput per spec, normalized
    to deflate-6 (measured implicitly if absent from `specs`).

    Uses the raw codecs without the store-uncompressed fallback so the
    table reflects the algorithms themselves.
    """
    if not dataset:
        raise ValueError("dataset must be non-empty")
    if repetitions < 1:
        raise ValueError("repetitions must be >= 1")

    measured: dict[CompressionSpec, tuple[float, float]] = {}

    def measure(spec: CompressionSpec) -> tuple[float, float]:
        if spec in measured:
            return measured[spec]
        frame = _raw_compress(dataset, spec)
        ratio = len(dataset) / len(frame)
        times = []
        for _ in range(repetitions):
            t0 = time.perf_counter()
            if spec.codec is Codec.none:
                out = bytes(memoryview(frame))  # verbatim read is a copy
            elif spec.codec is Codec.deflate:
                out = zlib.decompress(frame)
            else:
                out = lz4block.decompress(frame, len(dataset))
            times.append(time.perf_counter() - t0)
            assert len(out) == len(dataset)
        times.sort()
        elapsed = times[len(times) // 2]
        throughput = len(dataset) / elapsed if elapsed > 0 else float("inf")
        measured[spec] = (ratio, throughput)
        return measured[spec]

    base_ratio, base_tp = measure(_BASELINE)
    points = []
    for spec in specs:
        ratio, tp = measure(spec)
        points.append(
            CodecPoint(
                spec=spec,
                compression_ratio=ratio,
                decompression_throughput=tp,
                relative_ratio=ratio / base_ratio,
                relative_throughput=tp / base_tp,
            )
        )
    return points
