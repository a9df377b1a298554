"""Synthetic dataset generators for the benchmark experiments.

Two families:

* event-size sweep — a fixed aggregate of float payload split into files
  whose event size ranges from tens of bytes to megabytes, all holding
  seeded pseudorandom Gaussian values quantized to a coarse grid so the
  codecs have real structure to find (compressible but nontrivial).
* dimuon ntuple — four scalar f32 branches (px, py, pz, mass); the mass
  branch can be given a smaller basket target so its basket boundaries
  interleave with the momentum branches inside each cluster.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import ConfigError
from .format import BranchShape, CompressionSpec, ElementType
from .writer import BkioWriter, WriterConfig, make_branches

F32_BYTES = 4
DEFAULT_SWEEP_TOTAL = 40_000_000  # desk scale; --full restores the 10x size
FULL_SWEEP_TOTAL = 400_000_000
SWEEP_BASKET_BYTES = 1 << 20
SWEEP_CLUSTER_EVERY = 65536
DIMUON_BASKET_BYTES = 64 * 1024
DIMUON_CLUSTER_EVERY = 50_000
MISALIGNED_MASS_FACTOR = 0.7
_QUANT_STEP = 8.0  # values rounded to 1/8: a few hundred distinct symbols


@dataclass(frozen=True)
class SweepPoint:
    """events x floats_per_event cell of the event-size sweep."""

    events: int
    floats_per_event: int

    def validate(self, total_bytes: int) -> None:
        got = self.events * self.floats_per_event * F32_BYTES
        if got != total_bytes:
            raise ConfigError(
                f"point {self.events} x {self.floats_per_event} covers {got} bytes, "
                f"not the required {total_bytes}"
            )


def decade_points(total_bytes: int) -> list[SweepPoint]:
    """The decade ladder between ~40-byte and ~4 MB events for a total."""
    floats_total = total_bytes // F32_BYTES
    points = []
    fpe = 10
    while fpe <= floats_total // 10:
        if floats_total % fpe == 0:
            points.append(SweepPoint(floats_total // fpe, fpe))
        fpe *= 10
    return points


def _gaussian_f32(rng: np.random.Generator, n: int) -> np.ndarray:
    vals = rng.standard_normal(n, dtype=np.float32)
    return np.round(vals * _QUANT_STEP) / np.float32(_QUANT_STEP)


def sweep_file_name(point: SweepPoint, spec: CompressionSpec) -> str:
    return f"sweep_ev{point.events}_fpe{point.floats_per_event}_{spec.label}.bkio"


def generate_sweep(
    out_dir: str,
    spec: CompressionSpec,
    *,
    total_bytes: int = DEFAULT_SWEEP_TOTAL,
    points: Sequence[SweepPoint] | None = None,
    seed: int = 20170001,
    basket_bytes: int = SWEEP_BASKET_BYTES,
    cluster_every: int = SWEEP_CLUSTER_EVERY,
) -> list[str]:
    """Write one file per sweep point; returns the file paths.

    Every point must satisfy events * floats_per_event * 4 == total_bytes.
    """
    if points is None:
        points = decade_points(total_bytes)
    if not points:
        raise ConfigError(f"no sweep points for total_bytes={total_bytes}")
    for p in points:
        p.validate(total_bytes)

    os.makedirs(out_dir, exist_ok=True)
    paths = []
    for p in points:
        rng = np.random.default_rng(seed)
        path = os.path.join(out_dir, sweep_file_name(p, spec))
        branches = make_branches(
            ("values", ElementType.f32, BranchShape.fixed_array(p.floats_per_event), basket_bytes),
        )
        config = WriterConfig(branches, spec, cluster_every)
        with BkioWriter(path, config) as writer:
            chunk_entries = max(1, (8 << 20) // (p.floats_per_event * F32_BYTES))
            done = 0
            while done < p.events:
                take = min(chunk_entries, p.events - done)
                block = _gaussian_f32(rng, take * p.floats_per_event)
                writer.fill_many({"values": block.reshape(take, p.floats_per_event)})
                done += take
        _write_manifest(path, seed=seed, spec=spec, events=p.events,
                        floats_per_event=p.floats_per_event)
        paths.append(path)
    return paths


def generate_dimuon(
    path: str,
    events: int,
    spec: CompressionSpec,
    *,
    misaligned_mass: bool = True,
    seed: int = 20170002,
    basket_bytes: int = DIMUON_BASKET_BYTES,
    cluster_every: int = DIMUON_CLUSTER_EVERY,
) -> str:
    """Write a flat px/py/pz/mass ntuple of `events` rows.

    With misaligned_mass the mass branch gets a smaller basket target, so
    its basket boundaries interleave with the momentum branches between
    cluster boundaries (the expensive case for aligned-range reads).
    """
    if events < 1:
        raise ConfigError("events must be >= 1")
    mass_bytes = int(basket_bytes * MISALIGNED_MASS_FACTOR) if misaligned_mass else basket_bytes
    branches = make_branches(
        ("px", ElementType.f32, BranchShape.scalar(), basket_bytes),
        ("py", ElementType.f32, BranchShape.scalar(), basket_bytes),
        ("pz", ElementType.f32, BranchShape.scalar(), basket_bytes),
        ("mass", ElementType.f32, BranchShape.scalar(), mass_bytes),
    )
    config = WriterConfig(branches, spec, cluster_every)
    rng = np.random.default_rng(seed)
    with BkioWriter(path, config) as writer:
        chunk = 1 << 20
        done = 0
        while done < events:
            take = min(chunk, events - done)
            cols = {
                "px": _gaussian_f32(rng, take) * np.float32(20.0),
                "py": _gaussian_f32(rng, take) * np.float32(20.0),
                "pz": _gaussian_f32(rng, take) * np.float32(20.0),
                "mass": np.abs(_gaussian_f32(rng, take) * np.float32(2.0)) + np.float32(0.1),
            }
            writer.fill_many(cols)
            done += take
    _write_manifest(path, seed=seed, spec=spec, events=events,
                    misaligned_mass=misaligned_mass)
    return path


def _write_manifest(path: str, *, spec: CompressionSpec, **fields) -> None:
    meta = {"file": os.path.basename(path), "codec": spec.label, **fields}
    with open(path + ".json", "w") as f:
        json.dump(meta, f, indent=2, sort_keys=True)
        f.write("\n")


def momentum(px: float, py: float, pz: float) -> float:
    """p = sqrt(px^2 + py^2 + pz^2)."""
    return math.sqrt(px * px + py * py + pz * pz)


def energy(px: float, py: float, pz: float, mass: float) -> float:
    """E = sqrt(p^2 + m^2), natural units."""
    return math.sqrt(px * px + py * py + pz * pz + mass * mass)
