"""LZ4 block codec entry point: compiled kernel if built, else pure Python.

Both backends implement the same block format and are interchangeable;
`BACKEND` says which one this process is using. The pure backend exists
so the library works from an unbuilt source tree, at a large speed cost.
"""

from __future__ import annotations

from . import _lz4py

try:
    from . import _lz4core

    _impl = _lz4core
    BACKEND = "compiled"
except ImportError:  # pragma: no cover - exercised only in unbuilt trees
    _impl = _lz4py
    BACKEND = "pure"

compress = _impl.compress
compress_hc = _impl.compress_hc
decompress = _impl.decompress
compress_bound = _impl.compress_bound

# Explicit handles for the kernel benchmark and cross-backend tests.
pure = _lz4py
compiled = _impl if BACKEND == "compiled" else None
