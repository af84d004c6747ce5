"""Static r-bit retrieval: a GF(2) band system solved chunk by chunk.

Each key picks a chunk, then (per chunk seed) a start row and a random
64-bit coefficient word.  Its stored value is the XOR of the solution rows
selected by the coefficient, so a query is one or two word reads and a
parity per output bit.  Chunks of ~4096 keys get 5% slack rows plus one
band width; a chunk whose system turns out singular is re-seeded.
"""
from __future__ import annotations

import numba as nb
import numpy as np

from .hashing import (TAG_BITKEY_HI, TAG_BITKEY_LO, TAG_RET_CHUNK, TAG_RET_COEF,
                      TAG_RET_ROW, derive, derive_many, fastrange, mix64, range_many,
                      MASK64)
from .serial import FormatError, Reader, Writer
from .succinct import ctz, parity, read_bits, read_packed, write_packed

U64 = np.uint64
BAND = 64
CHUNK_TARGET = 4096
SLACK = 0.05
MAX_ATTEMPTS = 64


class RetrievalBuildError(RuntimeError):
    pass


def rows_for(count: int) -> int:
    if count == 0:
        return 0
    return -(-count * (100 + int(SLACK * 100)) // 100) + BAND


@nb.njit(inline="always")
def chunk_seed(global_seed, chunk, attempt):
    return mix64(mix64(np.uint64(global_seed) + np.uint64(chunk) * U64(0x9E3779B97F4A7C15))
                 + np.uint64(attempt))


@nb.njit(inline="always")
def _row_and_coef(hi, lo, seed, m):
    start = fastrange(derive(hi, lo, TAG_RET_ROW, seed), m - BAND + 1)
    coef = derive(hi, lo, TAG_RET_COEF, seed) | U64(1)
    return start, coef


@nb.njit(cache=True)
def _solve_chunk(hi, lo, vals, seed, m, r, planes, row_off):
    """Insert all keys of one chunk; on success write its solution rows."""
    coef_rows = np.zeros(m, dtype=np.uint64)
    val_rows = np.zeros(m, dtype=np.uint64)
    for t in range(hi.shape[0]):
        i, c = _row_and_coef(hi[t], lo[t], seed, m)
        v = vals[t]
        while True:
            if coef_rows[i] == 0:
                coef_rows[i] = c
                val_rows[i] = v
                break
            c ^= coef_rows[i]
            v ^= val_rows[i]
            if c == 0:
                if v != 0:
                    return False
                break
            tz = ctz(c)
            c >>= U64(tz)
            i += tz
    for b in range(r):
        plane = planes[b]
        window = U64(0)  # bit j <-> solution row (i + 1 + j)
        for i in range(m - 1, -1, -1):
            c = coef_rows[i]
            z = U64(0)
            if c != 0:
                z = U64(parity((c >> U64(1)) & window) ^ np.int64((val_rows[i] >> U64(b)) & U64(1)))
            window = (window << U64(1)) | z
            if z:
                pos = row_off + i
                plane[pos >> 6] |= U64(1) << U64(pos & 63)
    return True


@nb.njit(cache=True)
def _build(hi, lo, vals, chunk_of, nchunks, rows, offsets, global_seed, r, planes, seeds):
    order = np.argsort(chunk_of, kind="mergesort")
    starts = np.zeros(nchunks + 1, dtype=np.int64)
    for t in range(chunk_of.shape[0]):
        starts[chunk_of[t] + 1] += 1
    for c in range(nchunks):
        starts[c + 1] += starts[c]
    for c in range(nchunks):
        idx = order[starts[c]:starts[c + 1]]
        if idx.shape[0] == 0:
            seeds[c] = 0
            continue
        chi = hi[idx]
        clo = lo[idx]
        cval = vals[idx]
        ok = False
        for attempt in range(MAX_ATTEMPTS):
            s = chunk_seed(global_seed, c, attempt)
            if _solve_chunk(chi, clo, cval, s, rows[c], r, planes, offsets[c]):
                seeds[c] = s
                ok = True
                break
            # wipe the partial solution of a failed attempt (only rows of this chunk)
            for b in range(r):
                for i in range(rows[c]):
                    pos = offsets[c] + i
                    planes[b][pos >> 6] &= ~(U64(1) << U64(pos & 63))
        if not ok:
            return c
    return -1


@nb.njit(inline="always")
def ret_query(ret, hi, lo):
    r, gseed, nchunks, seeds, offsets, planes = ret
    if nchunks == 0:
        return U64(0)
    c = fastrange(derive(hi, lo, TAG_RET_CHUNK, gseed), nchunks)
    m = offsets[c + 1] - offsets[c]
    if m == 0:
        return U64(0)
    start, coef = _row_and_coef(hi, lo, seeds[c], m)
    pos = offsets[c] + start
    out = U64(0)
    for b in range(r):
        out |= U64(parity(read_bits(planes[b], pos, BAND) & coef)) << U64(b)
    return out


@nb.njit(cache=True)
def _query_many(ret, hi, lo):
    out = np.empty(hi.shape[0], dtype=np.uint64)
    for t in range(hi.shape[0]):
        out[t] = ret_query(ret, hi[t], lo[t])
    return out


class RetrievalFn:
    """Static function from a key set to r-bit values (arbitrary on non-members)."""

    def __init__(self, r: int, n: int, global_seed: int, seeds: np.ndarray,
                 offsets: np.ndarray, planes: np.ndarray):
        self.r = r
        self.n = n
        self.global_seed = global_seed
        self.seeds = seeds
        self.offsets = offsets
        self.planes = planes

    @classmethod
    def build(cls, hi, lo, values, r: int, global_seed: int = 0) -> "RetrievalFn":
        if not 1 <= r <= 8:
            raise ValueError("r must be in [1, 8]")
        hi = np.ascontiguousarray(hi, dtype=np.uint64)
        lo = np.ascontiguousarray(lo, dtype=np.uint64)
        vals = np.ascontiguousarray(values, dtype=np.uint64)
        n = hi.shape[0]
        if lo.shape[0] != n or vals.shape[0] != n:
            raise ValueError("keys and values must have equal length")
        if n and int(vals.max()) >> r:
            raise ValueError(f"values must be below 2**{r}")
        if n > 1:
            order = np.lexsort((lo, hi))
            if np.any((hi[order][1:] == hi[order][:-1]) & (lo[order][1:] == lo[order][:-1])):
                raise ValueError("duplicate Key128 in retrieval input")
        gseed = np.uint64(global_seed & MASK64)
        nchunks = -(-n // CHUNK_TARGET)
        chunk_of = range_many(hi, lo, TAG_RET_CHUNK, int(gseed), nchunks) if n else \
            np.zeros(0, dtype=np.int64)
        counts = np.bincount(chunk_of, minlength=nchunks)
        rows = np.array([rows_for(int(c)) for c in counts], dtype=np.int64)
        offsets = np.concatenate([[0], np.cumsum(rows)]).astype(np.int64)
        total = int(offsets[-1])
        planes = np.zeros((r, (total + 63) // 64 + 1), dtype=np.uint64)
        seeds = np.zeros(nchunks, dtype=np.uint64)
        failed = _build(hi, lo, vals, chunk_of, nchunks, rows, offsets, gseed, r, planes, seeds)
        if failed >= 0:
            raise RetrievalBuildError(
                f"chunk {failed} ({counts[failed]} keys) unsolvable after {MAX_ATTEMPTS} seeds")
        return cls(r, n, int(gseed), seeds, offsets, planes)

    @property
    def nb(self):
        return (self.r, np.uint64(self.global_seed), self.seeds.shape[0], self.seeds,
                self.offsets, self.planes)

    def query_many(self, hi, lo) -> np.ndarray:
        return _query_many(self.nb, np.ascontiguousarray(hi, dtype=np.uint64),
                           np.ascontiguousarray(lo, dtype=np.uint64))

    def query(self, key) -> int:
        return int(self.query_many([key.hi], [key.lo])[0])

    @property
    def total_rows(self) -> int:
        return int(self.offsets[-1])

    def write(self, w: Writer) -> None:
        w.u64(self.r)
        w.u64(self.n)
        w.u64(self.global_seed)
        w.words(self.seeds)
        w.words(self.offsets.astype(np.uint64))
        for b in range(self.r):
            write_packed(w, self.planes[b], self.total_rows)

    @classmethod
    def read(cls, rd: Reader) -> "RetrievalFn":
        r = rd.u64()
        n = rd.u64()
        gseed = rd.u64()
        seeds = rd.words()
        offsets = rd.words().astype(np.int64)
        if offsets.shape[0] != seeds.shape[0] + 1 or not 1 <= r <= 8:
            raise FormatError("inconsistent retrieval header")
        total = int(offsets[-1])
        planes = np.stack([read_packed(rd, total) for _ in range(r)]) if r else None
        return cls(r, n, gseed, seeds, offsets, planes)

    def to_bytes(self) -> bytes:
        w = Writer()
        self.write(w)
        return w.getvalue()

    @classmethod
    def from_bytes(cls, data: bytes) -> "RetrievalFn":
        return cls.read(Reader(data))

    def size_bits(self) -> int:
        return 8 * len(self.to_bytes())


def bit_keys(hi, lo, bit_index: int) -> tuple[np.ndarray, np.ndarray]:
    """Derived keys for storing the ``bit_index``-th bit of a value in a 1-bit function."""
    return (derive_many(hi, lo, TAG_BITKEY_HI, bit_index),
            derive_many(hi, lo, TAG_BITKEY_LO, bit_index))
