"""Command-line harness: dataset generation and the four experiments.

    bkio gen-sweep   --total-bytes 40000000 --codec lz4 --out data/
    bkio gen-dimuon  --events 1000000 --codec none --out dimuon.bkio
    bkio bench       dimuon.bkio --method bulk-decoded --reps 3 --out r.csv
    bkio report      bulk-speedup --workdir bench-out/
    bkio kernel-bench

Every command exits 0 on success and nonzero with a message on error.
"""

from __future__ import annotations

import functools
import json
import os
import sys

import click
import numpy as np

from . import datasets, harness
from .codecs import ratio_and_speed
from .errors import BkioError
from .format import CompressionSpec

_METHOD_CHOICES = ["per-entry", "bulk-raw", "bulk-decoded", "range-copy"]


def _spec(codec: str, level: int | None) -> CompressionSpec:
    return CompressionSpec.of(codec, level)


def _handle_errors(fn):
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except BkioError as exc:
            raise click.ClickException(str(exc))

    return wrapper


@click.group()
def main():
    """Columnar event-store benchmark harness."""


@main.command("gen-sweep")
@click.option("--total-bytes", type=int, default=datasets.DEFAULT_SWEEP_TOTAL, show_default=True)
@click.option("--events", type=int, default=None, help="Single point: event count.")
@click.option("--floats-per-event", type=int, default=None, help="Single point: floats per event.")
@click.option("--codec", type=click.Choice(["none", "deflate", "lz4", "lz4hc"]), default="lz4")
@click.option("--level", type=int, default=None, help="Codec level (defaults per codec).")
@click.option("--seed", type=int, default=20170001, show_default=True)
@click.option("--full", is_flag=True, help="Paper-scale 400 MB instead of 40 MB.")
@click.option("--out", "out_dir", default="bkio-data", show_default=True)
@_handle_errors
def gen_sweep(total_bytes, events, floats_per_event, codec, level, seed, full, out_dir):
    """Generate the event-size sweep files (fixed aggregate bytes)."""
    if full:
        total_bytes = datasets.FULL_SWEEP_TOTAL
    points = None
    if events is not None or floats_per_event is not None:
        if events is None or floats_per_event is None:
            raise click.ClickException("--events and --floats-per-event go together")
        points = [datasets.SweepPoint(events, floats_per_event)]
    paths = datasets.generate_sweep(
        out_dir, _spec(codec, level), total_bytes=total_bytes, points=points, seed=seed
    )
    for p in paths:
        click.echo(p)


@main.command("gen-dimuon")
@click.option("--events", type=int, default=1_000_000, show_default=True)
@click.option("--codec", type=click.Choice(["none", "deflate", "lz4", "lz4hc"]), default="none")
@click.option("--level", type=int, default=None)
@click.option("--misaligned-mass/--aligned", default=True, show_default=True,
              help="Give the mass branch a smaller basket target.")
@click.option("--seed", type=int, default=20170002, show_default=True)
@click.option("--full", is_flag=True, help="5M events, the paper-style size.")
@click.option("--out", "out_path", default="dimuon.bkio", show_default=True)
@_handle_errors
def gen_dimuon(events, codec, level, misaligned_mass, seed, full, out_path):
    """Generate a flat px/py/pz/mass ntuple."""
    if full:
        events = max(events, 5_000_000)
    path = datasets.generate_dimuon(
        out_path, events, _spec(codec, level), misaligned_mass=misaligned_mass, seed=seed
    )
    click.echo(path)


@main.command("bench")
@click.argument("file", type=click.Path(exists=True, dir_okay=False))
@click.option("--method", type=click.Choice(_METHOD_CHOICES), default="bulk-decoded", show_default=True)
@click.option("--prefetch", is_flag=True, help="Enable asynchronous parallel unzipping.")
@click.option("--threads", type=int, default=None, help="Prefetch worker count.")
@click.option("--reps", type=int, default=3, show_default=True)
@click.option("--out", "out_csv", default=None, help="Write the result row(s) as CSV.")
@_handle_errors
def bench(file, method, prefetch, threads, reps, out_csv):
    """Time one access method over FILE and print events/sec."""
    result = harness.run_benchmark(
        file, method.replace("-", "_"), prefetch=prefetch, threads=threads, repetitions=reps
    )
    click.echo(_format_result(result))
    if out_csv:
        harness.emit_csv([result], out_csv, metadata=_meta_for(file))
        click.echo(f"wrote {out_csv}")


def _format_result(r: harness.BenchResult) -> str:
    return (
        f"{r.method:22s} {r.codec:10s} events={r.events:<9d} "
        f"wall={r.wall_s * 1e3:8.1f}ms cpu={r.cpu_s * 1e3:8.1f}ms "
        f"unzip={r.unzip_s * 1e3:8.1f}ms ev/s={r.events_per_sec:12.0f} "
        f"reduction[{r.reduction_kind}]={r.reduction:.6e}"
    )


def _meta_for(path: str) -> dict:
    manifest = path + ".json"
    if os.path.exists(manifest):
        with open(manifest) as f:
            return {k: v for k, v in json.load(f).items() if k in ("seed", "codec", "events")}
    return {}


@main.command("report")
@click.argument("experiment", type=click.Choice(
    ["bulk-speedup", "codec-matrix", "event-size-sweep", "parallel-unzip"]))
@click.option("--workdir", default="bkio-bench", show_default=True)
@click.option("--events", type=int, default=1_000_000, show_default=True)
@click.option("--total-bytes", type=int, default=datasets.DEFAULT_SWEEP_TOTAL, show_default=True)
@click.option("--reps", type=int, default=3, show_default=True)
@click.option("--threads", type=int, default=None)
@click.option("--seed", type=int, default=20170001, show_default=True)
@click.option("--full", is_flag=True, help="Paper-scale dataset sizes.")
@click.option("--out", "out_csv", default=None, help="CSV path (defaults inside workdir).")
@click.option("--plot", "plot_png", default=None, help="Optional PNG chart path.")
@_handle_errors
def report(experiment, workdir, events, total_bytes, reps, threads, seed, full, out_csv, plot_png):
    """Reproduce one of the four experiments at desk scale."""
    os.makedirs(workdir, exist_ok=True)
    out_csv = out_csv or os.path.join(workdir, f"{experiment}.csv")
    if full:
        total_bytes = datasets.FULL_SWEEP_TOTAL
        events = max(events, 5_000_000)

    if experiment == "bulk-speedup":
        results = _exp_bulk_speedup(workdir, events, reps, seed)
        harness.emit_csv(results, out_csv, metadata={"seed": seed, "events": events})
    elif experiment == "codec-matrix":
        points = _exp_codec_matrix(total_bytes, seed)
        harness.emit_codec_csv(points, out_csv, metadata={"seed": seed, "bytes": total_bytes})
        for p in points:
            click.echo(
                f"{p.spec.label:12s} ratio={p.compression_ratio:6.3f} "
                f"decomp={p.decompression_throughput / 1e6:8.1f} MB/s "
                f"rel_ratio={p.relative_ratio:5.2f} rel_speed={p.relative_throughput:5.2f}"
            )
    elif experiment == "event-size-sweep":
        results = _exp_event_size_sweep(workdir, total_bytes, reps, seed)
        harness.emit_csv(results, out_csv, metadata={"seed": seed, "bytes": total_bytes})
        _echo_sweep_trend(results)
    else:
        results = _exp_parallel_unzip(workdir, events, reps, threads, seed)
        harness.emit_csv(results, out_csv, metadata={"seed": seed})
    click.echo(f"wrote {out_csv}")
    if plot_png:
        _plot(experiment, out_csv, plot_png)
        click.echo(f"wrote {plot_png}")


def _exp_bulk_speedup(workdir, events, reps, seed):
    results = []
    for codec, level in (("none", 0), ("lz4", 1), ("deflate", 6)):
        spec = _spec(codec, level)
        path = os.path.join(workdir, f"dimuon_{spec.label}.bkio")
        if not os.path.exists(path):
            datasets.generate_dimuon(path, events, spec, misaligned_mass=True, seed=seed)
        for method in harness.METHODS:
            r = harness.run_benchmark(path, method, repetitions=reps)
            results.append(r)
            click.echo(_format_result(r))
    return results


def _exp_codec_matrix(total_bytes, seed):
    rng = np.random.default_rng(seed)
    n = min(total_bytes, 40_000_000) // 4
    data = (np.round(rng.standard_normal(n, dtype=np.float32) * 8) / 8).astype(">f4").tobytes()
    specs = [
        CompressionSpec.of("deflate", 1), CompressionSpec.of("deflate", 6),
        CompressionSpec.of("deflate", 9), CompressionSpec.of("lz4", 1),
        CompressionSpec.of("lz4hc", 1), CompressionSpec.of("lz4hc", 9),
        CompressionSpec.of("none", 0),
    ]
    return ratio_and_speed(data, specs)


def _exp_event_size_sweep(workdir, total_bytes, reps, seed):
    spec = _spec("lz4", 1)
    paths = datasets.generate_sweep(
        os.path.join(workdir, "sweep"), spec, total_bytes=total_bytes, seed=seed
    )
    results = []
    for path in paths:
        r = harness.run_benchmark(path, "per_entry", repetitions=reps)
        results.append(r)
        click.echo(_format_result(r))
    return results


def _echo_sweep_trend(results):
    click.echo(f"{'events':>9s} {'other-cpu/event':>16s} {'unzip ns/byte':>14s}")
    for r in results:
        other = (r.cpu_s - r.unzip_s) / r.events
        per_byte = r.unzip_s / r.bytes_read * 1e9 if r.bytes_read else 0.0
        click.echo(f"{r.events:>9d} {other * 1e6:>13.3f} us {per_byte:>11.3f}")


def _exp_parallel_unzip(workdir, events, reps, threads, seed):
    spec = _spec("deflate", 6)
    results = []
    for count in (max(events // 10, 1), events):
        path = os.path.join(workdir, f"dimuon_unzip_{count}.bkio")
        if not os.path.exists(path):
            datasets.generate_dimuon(path, count, spec, misaligned_mass=False, seed=seed)
        for prefetch in (False, True):
            r = harness.run_benchmark(
                path, "bulk_decoded", prefetch=prefetch, threads=threads, repetitions=reps
            )
            results.append(r)
            click.echo(_format_result(r))
    return results


@main.command("kernel-bench")
@click.option("--size", type=int, default=4 << 20, show_default=True)
@click.option("--reps", type=int, default=3, show_default=True)
@_handle_errors
def kernel_bench(size, reps):
    """Compare the compiled LZ4 kernel against the pure-Python fallback."""
    from . import lz4block

    click.echo(f"active backend: {lz4block.BACKEND}")
    for p in harness.bench_kernels(size, reps):
        click.echo(f"{p.backend:9s} {p.operation:10s} {p.mb_per_s:10.2f} MB/s")


def _plot(experiment, csv_path, png_path):
    try:
        import matplotlib
        matplotlib.use("Agg")
        import matplotlib.pyplot as plt
    except ImportError as exc:
        raise click.ClickException(
            "plotting needs matplotlib (pip install bkio[plots])"
        ) from exc

    if experiment == "codec-matrix":
        import csv as _csv
        with open(csv_path) as f:
            rows = [r for r in _csv.DictReader(ln for ln in f if not ln.startswith("#"))]
        fig, ax = plt.subplots(figsize=(7, 4))
        ax.scatter([float(r["rel_ratio"]) for r in rows],
                   [float(r["rel_speed"]) for r in rows])
        for r in rows:
            ax.annotate(r["codec"], (float(r["rel_ratio"]), float(r["rel_speed"])))
        ax.set_xlabel("compression ratio vs deflate-6")
        ax.set_ylabel("decompression speed vs deflate-6")
    else:
        rows = harness.read_csv(csv_path)
        fig, ax = plt.subplots(figsize=(8, 4))
        labels = [f"{r['method']}\n{r['codec']}\n{r['events']}" for r in rows]
        ax.bar(range(len(rows)), [r["events_per_sec"] for r in rows])
        ax.set_xticks(range(len(rows)), labels, fontsize=7)
        ax.set_ylabel("events / s")
    ax.set_title(experiment)
    fig.tight_layout()
    fig.savefig(png_path, dpi=120)


if __name__ == "__main__":
    sys.exit(main())
