# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled LZ4 block codec: the hot kernel behind the lz4/lz4hc codecs.

Same block format as _lz4py (and liblz4); selected at import by
bkio.lz4block when built. Compression and decompression cores run
without the GIL so the prefetch worker pool gets real parallelism.
"""

import threading

from cpython.bytes cimport PyBytes_FromStringAndSize
from libc.stdlib cimport calloc, free, malloc
from libc.string cimport memcpy, memset

from .errors import CorruptFrameError

# Reusable per-thread buffers: repeated basket-sized calls would otherwise
# pay an mmap + page-fault storm on every multi-MB malloc/free pair.
_tls = threading.local()


cdef bytearray _scratch(Py_ssize_t n):
    buf = getattr(_tls, "buf", None)
    if buf is None or len(buf) < n:
        buf = bytearray(n if n > 65536 else 65536)
        _tls.buf = buf
    return buf

ctypedef unsigned char U8
ctypedef unsigned int U32
ctypedef unsigned long long U64

DEF MINMATCH = 4
DEF MFLIMIT = 12
DEF LASTLITERALS = 5
DEF MAX_DISTANCE = 65535
DEF HASHLOG = 16

BACKEND = "compiled"


def compress_bound(Py_ssize_t n):
    return n + n // 255 + 16


cdef inline U32 _read32(const U8* p) nogil:
    cdef U32 v
    memcpy(&v, p, 4)
    return v


cdef inline U64 _read64(const U8* p) nogil:
    cdef U64 v
    memcpy(&v, p, 8)
    return v


cdef inline U32 _hash32(U32 v) nogil:
    return (v * 2654435761U) >> (32 - HASHLOG)


cdef inline Py_ssize_t _count_match(const U8* src, Py_ssize_t a, Py_ssize_t b,
                                    Py_ssize_t limit) nogil:
    """Length of the common run src[a..] == src[b..], b+len < limit."""
    cdef Py_ssize_t n = 0
    while b + n + 8 <= limit and _read64(src + a + n) == _read64(src + b + n):
        n += 8
    while b + n < limit and src[a + n] == src[b + n]:
        n += 1
    return n


cdef inline Py_ssize_t _emit_seq(U8* dst, Py_ssize_t d, const U8* src,
                                 Py_ssize_t anchor, Py_ssize_t cur,
                                 Py_ssize_t offset, Py_ssize_t mlen) nogil:
    cdef Py_ssize_t litlen = cur - anchor
    cdef Py_ssize_t rest
    cdef U8 token = 0
    if litlen >= 15:
        token = 15 << 4
    else:
        token = <U8>(litlen << 4)
    if mlen - MINMATCH >= 15:
        token |= 15
    else:
        token |= <U8>(mlen - MINMATCH)
    dst[d] = token
    d += 1
    if litlen >= 15:
        rest = litlen - 15
        while rest >= 255:
            dst[d] = 255
            d += 1
            rest -= 255
        dst[d] = <U8>rest
        d += 1
    memcpy(dst + d, src + anchor, litlen)
    d += litlen
    dst[d] = <U8>(offset & 0xFF)
    dst[d + 1] = <U8>(offset >> 8)
    d += 2
    if mlen - MINMATCH >= 15:
        rest = mlen - MINMATCH - 15
        while rest >= 255:
            dst[d] = 255
            d += 1
            rest -= 255
        dst[d] = <U8>rest
        d += 1
    return d


cdef inline Py_ssize_t _emit_tail(U8* dst, Py_ssize_t d, const U8* src,
                                  Py_ssize_t anchor, Py_ssize_t n) nogil:
    cdef Py_ssize_t litlen = n - anchor
    cdef Py_ssize_t rest
    if litlen >= 15:
        dst[d] = 15 << 4
        d += 1
        rest = litlen - 15
        while rest >= 255:
            dst[d] = 255
            d += 1
            rest -= 255
        dst[d] = <U8>rest
        d += 1
    else:
        dst[d] = <U8>(litlen << 4)
        d += 1
    memcpy(dst + d, src + anchor, litlen)
    return d + litlen


cdef Py_ssize_t _compress_core(const U8* src, Py_ssize_t n, U8* dst,
                               U32* table) nogil:
    """Fast hash-table compressor. table has 2^HASHLOG zeroed slots (pos+1)."""
    cdef Py_ssize_t cur = 0, anchor = 0, d = 0
    cdef Py_ssize_t mflimit = n - MFLIMIT
    cdef Py_ssize_t match_limit = n - LASTLITERALS
    cdef Py_ssize_t cand, mlen
    cdef U32 h, step_counter = 1 << 6

    if n >= MFLIMIT + 1:
        while cur <= mflimit:
            h = _hash32(_read32(src + cur))
            cand = <Py_ssize_t>table[h] - 1
            table[h] = <U32>(cur + 1)
            if (cand >= 0 and cur - cand <= MAX_DISTANCE
                    and _read32(src + cand) == _read32(src + cur)):
                while cur > anchor and cand > 0 and src[cur - 1] == src[cand - 1]:
                    cur -= 1
                    cand -= 1
                mlen = MINMATCH + _count_match(src, cand + MINMATCH,
                                               cur + MINMATCH, match_limit)
                d = _emit_seq(dst, d, src, anchor, cur, cur - cand, mlen)
                cur += mlen
                anchor = cur
                if cur <= mflimit:
                    table[_hash32(_read32(src + cur - 2))] = <U32>(cur - 1)
                step_counter = 1 << 6
            else:
                cur += step_counter >> 6
                step_counter += 1
    return _emit_tail(dst, d, src, anchor, n)


cdef Py_ssize_t _compress_hc_core(const U8* src, Py_ssize_t n, U8* dst,
                                  int attempts_max, int* head, int* prev) nogil:
    """Chained-hash search; effort bounded by attempts_max per position."""
    cdef Py_ssize_t cur = 0, anchor = 0, d = 0
    cdef Py_ssize_t mflimit = n - MFLIMIT
    cdef Py_ssize_t match_limit = n - LASTLITERALS
    cdef Py_ssize_t cand, nxt, best_len, best_pos, mlen, pos, stop
    cdef int attempts
    cdef U32 h

    if n >= MFLIMIT + 1:
        while cur <= mflimit:
            h = _hash32(_read32(src + cur))
            best_len = 0
            best_pos = -1
            cand = head[h]
            attempts = attempts_max
            while cand >= 0 and cur - cand <= MAX_DISTANCE and attempts > 0:
                if _read32(src + cand) == _read32(src + cur):
                    mlen = MINMATCH + _count_match(src, cand + MINMATCH,
                                                   cur + MINMATCH, match_limit)
                    if mlen > best_len:
                        best_len = mlen
                        best_pos = cand
                attempts -= 1
                nxt = prev[cand & MAX_DISTANCE]
                if nxt >= cand:  # stale ring entry from an aliased position
                    break
                cand = nxt
            if best_len >= MINMATCH:
                pos = cur
                while pos > anchor and best_pos > 0 and src[pos - 1] == src[best_pos - 1]:
                    pos -= 1
                    best_pos -= 1
                    best_len += 1
                d = _emit_seq(dst, d, src, anchor, pos, pos - best_pos, best_len)
                stop = pos + best_len
                if stop > mflimit + 1:
                    stop = mflimit + 1
                while cur < stop:
                    h = _hash32(_read32(src + cur))
                    prev[cur & MAX_DISTANCE] = head[h]
                    head[h] = <int>cur
                    cur += 1
                cur = pos + best_len
                anchor = cur
            else:
                prev[cur & MAX_DISTANCE] = head[h]
                head[h] = <int>cur
                cur += 1
    return _emit_tail(dst, d, src, anchor, n)


cdef Py_ssize_t _decompress_core(const U8* src, Py_ssize_t n, U8* dst,
                                 Py_ssize_t cap) nogil:
    """Safe decoder: returns produced size or -1 on malformed input.

    dst must be allocated with >= cap + 16 bytes: the fast paths copy in
    unconditional 16-byte strides that may overshoot into that pad.
    """
    cdef Py_ssize_t s = 0, d = 0
    cdef Py_ssize_t litlen, mlen, offset, start, i
    cdef U32 token
    cdef U8 b

    while True:
        if s >= n:
            return -1
        token = src[s]
        s += 1
        litlen = token >> 4
        if litlen == 15:
            while True:
                if s >= n:
                    return -1
                b = src[s]
                s += 1
                litlen += b
                if b != 255:
                    break
            if s + litlen > n or d + litlen > cap:
                return -1
            memcpy(dst + d, src + s, litlen)
        else:
            # short literal run: one unguarded 16-byte copy when room allows
            if s + litlen > n or d + litlen > cap:
                return -1
            if s + 16 <= n:
                memcpy(dst + d, src + s, 16)
            else:
                memcpy(dst + d, src + s, litlen)
        s += litlen
        d += litlen
        if s == n:
            return d
        if s + 2 > n:
            return -1
        offset = src[s] | (<Py_ssize_t>src[s + 1] << 8)
        s += 2
        if offset == 0 or offset > d:
            return -1
        mlen = token & 15
        if mlen == 15:
            while True:
                if s >= n:
                    return -1
                b = src[s]
                s += 1
                mlen += b
                if b != 255:
                    break
        mlen += MINMATCH
        if d + mlen > cap:
            return -1
        start = d - offset
        if offset >= 16 and mlen <= 16:
            memcpy(dst + d, dst + start, 16)
        elif offset >= 8:
            i = 0
            while i < mlen:  # stride copy is safe: source lags by >= 8
                memcpy(dst + d + i, dst + start + i, 8)
                i += 8
        elif offset == 1:
            memset(dst + d, dst[start], mlen)
        else:
            for i in range(mlen):
                dst[d + i] = dst[start + i]
        d += mlen


def compress(const U8[::1] src not None):
    """LZ4 block compression, fast strategy."""
    cdef Py_ssize_t n = src.shape[0]
    if n == 0:
        return b"\x00"
    cdef bytearray out = _scratch(n + n // 255 + 16)
    cdef U8[::1] dst_mv = out
    cdef U8* dst = &dst_mv[0]
    cdef U32* table = <U32*>calloc(1 << HASHLOG, sizeof(U32))
    if table == NULL:
        raise MemoryError
    cdef const U8* sp = &src[0]
    cdef Py_ssize_t size
    try:
        with nogil:
            size = _compress_core(sp, n, dst, table)
        return PyBytes_FromStringAndSize(<char*>dst, size)
    finally:
        free(table)


def compress_hc(const U8[::1] src not None, int level=9):
    """LZ4 block compression, high-compression chained search."""
    cdef Py_ssize_t n = src.shape[0]
    if n == 0:
        return b"\x00"
    if level < 1:
        level = 1
    if level > 12:
        level = 12
    cdef int attempts_max = 1 << level
    cdef bytearray out = _scratch(n + n // 255 + 16)
    cdef U8[::1] dst_mv = out
    cdef U8* dst = &dst_mv[0]
    cdef int* head = <int*>malloc((1 << HASHLOG) * sizeof(int))
    cdef int* prev = <int*>malloc((MAX_DISTANCE + 1) * sizeof(int))
    if head == NULL or prev == NULL:
        if head != NULL:
            free(head)
        if prev != NULL:
            free(prev)
        raise MemoryError
    memset(head, 0xFF, (1 << HASHLOG) * sizeof(int))  # all -1
    memset(prev, 0xFF, (MAX_DISTANCE + 1) * sizeof(int))
    cdef const U8* sp = &src[0]
    cdef Py_ssize_t size
    try:
        with nogil:
            size = _compress_hc_core(sp, n, dst, attempts_max, head, prev)
        return PyBytes_FromStringAndSize(<char*>dst, size)
    finally:
        free(head)
        free(prev)


def decompress(const U8[::1] src not None, Py_ssize_t capacity):
    """Decode an LZ4 block into at most `capacity` bytes."""
    cdef Py_ssize_t n = src.shape[0]
    if n == 0:
        raise CorruptFrameError("lz4: empty frame")
    if capacity < 0:
        raise ValueError("capacity must be >= 0")
    cdef bytearray out = _scratch(capacity + 32)
    cdef U8[::1] dst_mv = out
    cdef U8* dst = &dst_mv[0]
    cdef const U8* sp = &src[0]
    cdef Py_ssize_t size
    with nogil:
        size = _decompress_core(sp, n, dst, capacity)
    if size < 0:
        raise CorruptFrameError("lz4: malformed block")
    return PyBytes_FromStringAndSize(<char*>dst, size)
