import csv
import math
import os

import numpy as np
import pytest
from click.testing import CliRunner

from bkio import cli, datasets, harness
from bkio.errors import BenchmarkError, ConfigError
from bkio.format import CompressionSpec
from bkio.reader import BkioReader

NONE = CompressionSpec.of("none", 0)
LZ4 = CompressionSpec.of("lz4", 1)


def test_sweep_point_constraint():
    datasets.SweepPoint(100, 1_000_000).validate(400_000_000)
    with pytest.raises(ConfigError):
        datasets.SweepPoint(100, 999_999).validate(400_000_000)


def test_decade_points_cover_desk_scale():
    pts = datasets.decade_points(40_000_000)
    assert datasets.SweepPoint(1_000_000, 10) in pts
    assert datasets.SweepPoint(10, 1_000_000) in pts
    for p in pts:
        p.validate(40_000_000)


def test_generate_sweep_files(tmp_path):
    paths = datasets.generate_sweep(
        str(tmp_path), LZ4, total_bytes=400_000,
        points=[datasets.SweepPoint(100, 1000), datasets.SweepPoint(10_000, 10)],
        seed=1,
    )
    assert len(paths) == 2
    for p in paths:
        with BkioReader(p) as r:
            desc = r.branch(r.branch_names[0])
            assert r.total_entries * desc.shape.fixed_len * 4 == 400_000
        assert os.path.exists(p + ".json")


def test_generate_sweep_is_seed_deterministic(tmp_path):
    a = datasets.generate_sweep(str(tmp_path / "a"), NONE, total_bytes=40_000,
                                points=[datasets.SweepPoint(100, 100)], seed=9)
    b = datasets.generate_sweep(str(tmp_path / "b"), NONE, total_bytes=40_000,
                                points=[datasets.SweepPoint(100, 100)], seed=9)
    with open(a[0], "rb") as fa, open(b[0], "rb") as fb:
        assert fa.read() == fb.read()


def test_dimuon_misalignment_constructed(tmp_path):
    path = str(tmp_path / "mis.bkio")
    datasets.generate_dimuon(path, 60_000, NONE, misaligned_mass=True, seed=2)
    with BkioReader(path) as r:
        px_starts = {m.first_entry for m in r.baskets_of("px")}
        mass_starts = {m.first_entry for m in r.baskets_of("mass")}
        assert mass_starts - px_starts, "mass baskets must interleave"


def test_dimuon_aligned_boundaries_identical(tmp_path):
    path = str(tmp_path / "ali.bkio")
    datasets.generate_dimuon(path, 60_000, NONE, misaligned_mass=False, seed=2)
    with BkioReader(path) as r:
        sets = [
            tuple((m.first_entry, m.entry_count) for m in r.baskets_of(name))
            for name in ("px", "py", "pz", "mass")
        ]
        assert len(set(sets)) == 1


def test_dimuon_physics_sanity(tmp_path):
    path = str(tmp_path / "phys.bkio")
    datasets.generate_dimuon(path, 5_000, NONE, seed=3)
    with BkioReader(path) as r:
        cols = r.read_range_aligned(("px", "py", "pz", "mass"), 0, r.total_entries, force_copy=True)
        px = np.asarray(cols["px"].values, dtype=np.float64)
        py = np.asarray(cols["py"].values, dtype=np.float64)
        pz = np.asarray(cols["pz"].values, dtype=np.float64)
        m = np.asarray(cols["mass"].values, dtype=np.float64)
        assert (m >= 0).all()
        p2 = px * px + py * py + pz * pz
        e = np.sqrt(p2 + m * m)
        # E^2 - p^2 = m^2 within f32-scale tolerance
        assert np.allclose(e * e - p2, m * m, rtol=1e-5, atol=1e-3)


def _tiny_dimuon(tmp_path, spec=NONE, events=20_000):
    path = str(tmp_path / f"d_{spec.label}.bkio")
    datasets.generate_dimuon(path, events, spec, misaligned_mass=True, seed=4,
                             basket_bytes=8192, cluster_every=5000)
    return path


def test_methods_agree_on_reduction(tmp_path):
    path = _tiny_dimuon(tmp_path)
    res = {m: harness.run_benchmark(path, m, repetitions=1) for m in harness.METHODS}
    assert res["per_entry"].reduction_kind == "psum"
    psums = [res[m].reduction for m in ("per_entry", "bulk_raw", "bulk_decoded")]
    for v in psums[1:]:
        assert abs(v - psums[0]) <= 1e-5 * abs(psums[0])
    # energy path checked against an independent per-entry oracle
    with BkioReader(path) as r:
        esum = 0.0
        for e in range(r.total_entries):
            p = r.get_entry(e)
            esum += math.sqrt(p["px"] ** 2 + p["py"] ** 2 + p["pz"] ** 2 + p["mass"] ** 2)
    assert abs(res["range_copy"].reduction - esum) <= 1e-5 * abs(esum)


def test_bulk_faster_than_per_entry_direction(tmp_path):
    path = _tiny_dimuon(tmp_path, events=60_000)
    per = harness.run_benchmark(path, "per_entry", repetitions=1)
    bulk = harness.run_benchmark(path, "bulk_decoded", repetitions=1)
    assert bulk.events_per_sec > per.events_per_sec


def test_zero_repetitions_rejected(tmp_path):
    path = _tiny_dimuon(tmp_path, events=1000)
    with pytest.raises(BenchmarkError):
        harness.run_benchmark(path, "per_entry", repetitions=0)
    with pytest.raises(BenchmarkError):
        harness.run_benchmark(path, "warp_drive", repetitions=1)


def test_sweep_reduction_matches_across_methods(tmp_path):
    paths = datasets.generate_sweep(str(tmp_path), LZ4, total_bytes=200_000,
                                    points=[datasets.SweepPoint(500, 100)], seed=5)
    rows = {m: harness.run_benchmark(paths[0], m, repetitions=1) for m in harness.METHODS}
    base = rows["per_entry"].reduction
    for m in ("bulk_raw", "bulk_decoded", "range_copy"):
        assert abs(rows[m].reduction - base) <= 1e-5 * abs(base)


def test_emit_csv_round_trip(tmp_path):
    path = _tiny_dimuon(tmp_path, events=2_000)
    r = harness.run_benchmark(path, "bulk_decoded", repetitions=1)
    out = str(tmp_path / "r.csv")
    harness.emit_csv([r], out, metadata={"seed": 4})
    with open(out) as f:
        lines = f.read().splitlines()
    assert lines[0] == "# seed=4"
    assert lines[1] == "method,codec,events,wall_ms,cpu_ms,unzip_ms,events_per_sec,bytes"
    assert len(lines) == 3
    parsed = harness.read_csv(out)
    assert parsed[0]["events"] == r.events
    assert parsed[0]["wall_ms"] == pytest.approx(r.wall_s * 1e3, rel=0, abs=0)
    assert parsed[0]["events_per_sec"] == r.events_per_sec  # repr round-trips floats

    with open(out, newline="") as f:  # plain csv reader sees exactly one record + header
        rows = list(csv.reader(ln for ln in f if not ln.startswith("#")))
    assert len(rows) == 2 and rows[0][0] == "method"


def test_emit_csv_rejects_empty(tmp_path):
    with pytest.raises(BenchmarkError):
        harness.emit_csv([], str(tmp_path / "x.csv"))


def test_bench_result_sanity_bounds():
    with pytest.raises(BenchmarkError):
        harness.BenchResult("m", "c", 1, wall_s=0.1, cpu_s=1.0, unzip_s=0.0,
                            events_per_sec=1, bytes_read=0, reduction=0.0,
                            reduction_kind="sum", threads=1)
    with pytest.raises(BenchmarkError):
        harness.BenchResult("m", "c", 1, wall_s=1.0, cpu_s=0.5, unzip_s=0.9,
                            events_per_sec=1, bytes_read=0, reduction=0.0,
                            reduction_kind="sum", threads=1)


def test_kernel_bench_compares_backends():
    points = harness.bench_kernels(size=1 << 20, repetitions=1)
    backends = {p.backend for p in points}
    assert "pure" in backends
    ops = {(p.backend, p.operation) for p in points}
    assert ("pure", "decompress") in ops


def test_cli_gen_bench_report(tmp_path):
    runner = CliRunner()
    d = str(tmp_path / "dimuon.bkio")
    r = runner.invoke(cli.main, ["gen-dimuon", "--events", "5000", "--codec", "lz4",
                                 "--seed", "11", "--out", d])
    assert r.exit_code == 0, r.output
    assert os.path.exists(d)

    r = runner.invoke(cli.main, ["bench", d, "--method", "bulk-decoded", "--reps", "2",
                                 "--out", str(tmp_path / "b.csv")])
    assert r.exit_code == 0, r.output
    assert "bulk_decoded" in r.output
    assert os.path.exists(tmp_path / "b.csv")

    r = runner.invoke(cli.main, ["bench", d, "--method", "per-entry", "--prefetch", "--reps", "1"])
    assert r.exit_code == 0, r.output

    r = runner.invoke(cli.main, ["gen-sweep", "--total-bytes", "100000", "--events", "100",
                                 "--floats-per-event", "250", "--codec", "deflate", "--level", "1",
                                 "--out", str(tmp_path / "sw")])
    assert r.exit_code == 0, r.output

    r = runner.invoke(cli.main, ["gen-sweep", "--total-bytes", "100000", "--events", "7",
                                 "--floats-per-event", "3", "--out", str(tmp_path / "sw2")])
    assert r.exit_code != 0  # constraint violation surfaces as nonzero exit


def test_cli_kernel_bench():
    runner = CliRunner()
    r = runner.invoke(cli.main, ["kernel-bench", "--size", str(1 << 18), "--reps", "1"])
    assert r.exit_code == 0, r.output
    assert "backend" in r.output


def test_cli_report_codec_matrix(tmp_path):
    runner = CliRunner()
    out = str(tmp_path / "cm.csv")
    r = runner.invoke(cli.main, ["report", "codec-matrix", "--workdir", str(tmp_path),
                                 "--total-bytes", "1000000", "--out", out])
    assert r.exit_code == 0, r.output
    with open(out) as f:
        rows = [ln for ln in f if not ln.startswith("#")]
    assert rows[0].strip() == "codec,ratio,decomp_mb_per_s,rel_ratio,rel_speed"
    assert any(ln.startswith("deflate-6") for ln in rows)
