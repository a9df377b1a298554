"""Pure-Python LZ4 block codec.

Fallback used when the compiled kernel is unavailable. Implements the
standard LZ4 block format (token / literals / little-endian offset /
match), interoperable with liblz4: output from either side decodes on
the other. Orders of magnitude slower than the compiled kernel; fine
for correctness, not for benchmarks.
"""

from __future__ import annotations

from .errors import CorruptFrameError

MINMATCH = 4
MFLIMIT = 12  # a match may not start within the last 12 bytes
LASTLITERALS = 5  # the last 5 bytes are always literals
MAX_DISTANCE = 65535
_HASHLOG = 16


def compress_bound(n: int) -> int:
    """Worst-case compressed size for an n-byte input."""
    return n + n // 255 + 16


def _hash32(v: int) -> int:
    return ((v * 2654435761) & 0xFFFFFFFF) >> (32 - _HASHLOG)


def _read32(buf: bytes, i: int) -> int:
    return int.from_bytes(buf[i : i + 4], "little")


def _match_length(buf: bytes, a: int, b: int, limit: int) -> int:
    n = 0
    while b + n < limit and buf[a + n] == buf[b + n]:
        n += 1
    return n


def _emit(out: bytearray, src: bytes, anchor: int, cur: int, offset: int, mlen: int) -> None:
    litlen = cur - anchor
    token_lit = 15 if litlen >= 15 else litlen
    token_match = 15 if mlen - MINMATCH >= 15 else mlen - MINMATCH
    out.append((token_lit << 4) | token_match)
    if litlen >= 15:
        rest = litlen - 15
        while rest >= 255:
            out.append(255)
            rest -= 255
        out.append(rest)
    out += src[anchor:cur]
    out += offset.to_bytes(2, "little")
    if mlen - MINMATCH >= 15:
        rest = mlen - MINMATCH - 15
        while rest >= 255:
            out.append(255)
            rest -= 255
        out.append(rest)


def _emit_last_literals(out: bytearray, src: bytes, anchor: int) -> None:
    litlen = len(src) - anchor
    token_lit = 15 if litlen >= 15 else litlen
    out.append(token_lit << 4)
    if litlen >= 15:
        rest = litlen - 15
        while rest >= 255:
            out.append(255)
            rest -= 255
        out.append(rest)
    out += src[anchor:]


def compress(src: bytes) -> bytes:
    """Fast single-pass hash-table compressor (LZ4 default strategy)."""
    n = len(src)
    out = bytearray()
    if n < MFLIMIT + 1:
        _emit_last_literals(out, src, 0)
        return bytes(out)

    table: dict[int, int] = {}
    match_limit = n - LASTLITERALS
    anchor = 0
    cur = 0
    step_counter = 1 << 6
    while cur <= n - MFLIMIT:
        h = _hash32(_read32(src, cur))
        cand = table.get(h, -1)
        table[h] = cur
        if (
            cand >= 0
            and cur - cand <= MAX_DISTANCE
            and _read32(src, cand) == _read32(src, cur)
        ):
            # extend backward over pending literals
            while cur > anchor and cand > 0 and src[cur - 1] == src[cand - 1]:
                cur -= 1
                cand -= 1
            mlen = MINMATCH + _match_length(src, cand + MINMATCH, cur + MINMATCH, match_limit)
            _emit(out, src, anchor, cur, cur - cand, mlen)
            cur += mlen
            anchor = cur
            if cur <= n - MFLIMIT:
                table[_hash32(_read32(src, cur - 2))] = cur - 2
            step_counter = 1 << 6
        else:
            cur += step_counter >> 6
            step_counter += 1
    _emit_last_literals(out, src, anchor)
    return bytes(out)


def compress_hc(src: bytes, level: int = 9) -> bytes:
    """Higher-ratio compressor: chained hash search, effort grows with level."""
    n = len(src)
    out = bytearray()
    if n < MFLIMIT + 1:
        _emit_last_literals(out, src, 0)
        return bytes(out)

    attempts_max = 1 << min(max(level, 1), 12)
    head: dict[int, int] = {}
    prev = [0] * (MAX_DISTANCE + 1)
    match_limit = n - LASTLITERALS

    def insert(pos: int) -> None:
        h = _hash32(_read32(src, pos))
        prev[pos & MAX_DISTANCE] = head.get(h, -1)
        head[h] = pos

    anchor = 0
    cur = 0
    while cur <= n - MFLIMIT:
        best_len = 0
        best_pos = -1
        cand = head.get(_hash32(_read32(src, cur)), -1)
        attempts = attempts_max
        while cand >= 0 and cur - cand <= MAX_DISTANCE and attempts > 0:
            if _read32(src, cand) == _read32(src, cur):
                mlen = MINMATCH + _match_length(
                    src, cand + MINMATCH, cur + MINMATCH, match_limit
                )
                if mlen > best_len:
                    best_len = mlen
                    best_pos = cand
            attempts -= 1
            cand = prev[cand & MAX_DISTANCE]
        if best_len >= MINMATCH:
            m_cur, m_pos = cur, best_pos
            while m_cur > anchor and m_pos > 0 and src[m_cur - 1] == src[m_pos - 1]:
                m_cur -= 1
                m_pos -= 1
                best_len += 1
            _emit(out, src, anchor, m_cur, m_cur - m_pos, best_len)
            stop = min(m_cur + best_len, n - MFLIMIT + 1)
            insert(cur)
            pos = cur + 1
            while pos < stop:
                insert(pos)
                pos += 1
            cur = m_cur + best_len
            anchor = cur
        else:
            insert(cur)
            cur += 1
    _emit_last_literals(out, src, anchor)
    return bytes(out)


def decompress(src: bytes, capacity: int) -> bytes:
    """Decode an LZ4 block into at most `capacity` bytes.

    Raises CorruptFrameError on any malformed input; never reads or
    writes out of bounds.
    """
    n = len(src)
    out = bytearray()
    s = 0
    if n == 0:
        raise CorruptFrameError("lz4: empty frame")
    while True:
        if s >= n:
            raise CorruptFrameError("lz4: stream ends without final literals")
        token = src[s]
        s += 1
        litlen = token >> 4
        if litlen == 15:
            while True:
                if s >= n:
                    raise CorruptFrameError("lz4: truncated literal length")
                b = src[s]
                s += 1
                litlen += b
                if b != 255:
                    break
        if s + litlen > n:
            raise CorruptFrameError("lz4: literals overrun input")
        if len(out) + litlen > capacity:
            raise CorruptFrameError("lz4: output larger than expected")
        out += src[s : s + litlen]
        s += litlen
        if s == n:
            return bytes(out)  # last sequence: literals only
        if s + 2 > n:
            raise CorruptFrameError("lz4: truncated match offset")
        offset = src[s] | (src[s + 1] << 8)
        s += 2
        if offset == 0 or offset > len(out):
            raise CorruptFrameError("lz4: invalid match offset")
        mlen = token & 15
        if mlen == 15:
            while True:
                if s >= n:
                    raise CorruptFrameError("lz4: truncated match length")
                b = src[s]
                s += 1
                mlen += b
                if b != 255:
                    break
        mlen += MINMATCH
        if len(out) + mlen > capacity:
            raise CorruptFrameError("lz4: output larger than expected")
        start = len(out) - offset
        if offset >= mlen:
            out += out[start : start + mlen]
        else:
            for i in range(mlen):  # overlapping match: byte-serial semantics
                out.append(out[start + i])
