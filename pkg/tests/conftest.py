import random

import numpy as np
import pytest

from bkio.format import BranchShape, CompressionSpec, ElementType
from bkio.writer import BkioWriter, WriterConfig, make_branches

ALL_SPECS = [
    CompressionSpec.of("none", 0),
    CompressionSpec.of("deflate", 1),
    CompressionSpec.of("deflate", 6),
    CompressionSpec.of("deflate", 9),
    CompressionSpec.of("lz4", 1),
    CompressionSpec.of("lz4hc", 9),
]

ELEMENTS = list(ElementType)


def random_shape(rng: random.Random) -> BranchShape:
    kind = rng.randrange(3)
    if kind == 0:
        return BranchShape.scalar()
    if kind == 1:
        return BranchShape.fixed_array(rng.randint(1, 6))
    return BranchShape.var_array()


def random_schema(rng: random.Random, max_branches: int = 4):
    n = rng.randint(1, max_branches)
    specs = []
    for i in range(n):
        elem = rng.choice(ELEMENTS)
        shape = random_shape(rng)
        target = rng.choice([24, 64, 256, 4096])
        specs.append((f"b{i}", elem, shape, target))
    return make_branches(*specs)


def random_value(rng: random.Random, elem: ElementType, shape: BranchShape):
    def one():
        if elem is ElementType.f32:
            return float(np.float32(rng.uniform(-1e3, 1e3)))
        if elem is ElementType.f64:
            return rng.uniform(-1e6, 1e6)
        if elem is ElementType.i32:
            return rng.randint(-(2**31), 2**31 - 1)
        if elem is ElementType.i64:
            return rng.randint(-(2**63), 2**63 - 1)
        return rng.randint(0, 255)

    if shape.kind.value == "scalar":
        return one()
    if shape.kind.value == "fixed_array":
        return [one() for _ in range(shape.fixed_len)]
    return [one() for _ in range(rng.randint(0, 5))]


def write_random_file(path, rng: random.Random, *, entries=None, spec=None,
                      cluster_every=None, schema=None):
    """Write a randomized file; returns (fill log, branches, spec, summary)."""
    branches = schema if schema is not None else random_schema(rng)
    spec = spec if spec is not None else rng.choice(ALL_SPECS)
    entries = entries if entries is not None else rng.randint(0, 300)
    cluster_every = cluster_every if cluster_every is not None else rng.choice([7, 25, 100, 1000])
    config = WriterConfig(branches, spec, cluster_every)
    log = []
    with BkioWriter(str(path), config) as w:
        for _ in range(entries):
            row = {b.name: random_value(rng, b.element, b.shape) for b in branches}
            w.fill_entry(row)
            log.append(row)
    return log, branches, spec, config


@pytest.fixture
def rng():
    return random.Random(0xB410)
