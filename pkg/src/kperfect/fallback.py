"""Small minimal perfect hash used to place leftover keys.

Layered bumping with one slot per key: each layer hashes its keys to as
many slots as keys, marks slots hit exactly once, and passes the colliding
keys on.  All layer bit vectors are concatenated, so a key stored in a
layer gets ``rank1`` of its slot position as output.  Once few keys remain a
single brute-forced seed maps them bijectively onto the tail of the range.
"""
from __future__ import annotations

import numba as nb
import numpy as np

from .hashing import TAG_FALLBACK, derive, fastrange, range_many, sub_seed
from .serial import FormatError, Reader, Writer
from .succinct import BitVec, bv_rank1, get_bit

STRAGGLERS = 8
MAX_LAYERS = 200
BRUTE_LIMIT = 1 << 26


class FallbackBuildError(RuntimeError):
    pass


@nb.njit(cache=True)
def _brute_seed(hi, lo, base, limit):
    r = hi.shape[0]
    seen = np.zeros(r, dtype=np.int64)
    for s in range(1, limit + 1):
        ok = True
        for t in range(r):
            j = fastrange(derive(hi[t], lo[t], TAG_FALLBACK, np.uint64(base) + np.uint64(s)), r)
            if seen[j] == s:
                ok = False
                break
            seen[j] = s
        if ok:
            return np.uint64(base) + np.uint64(s)
    return np.uint64(0)


@nb.njit(inline="always")
def fallback_query(fb, hi, lo):
    bv, starts, seeds, final_seed, final_count = fb
    for j in range(seeds.shape[0]):
        m = starts[j + 1] - starts[j]
        pos = starts[j] + fastrange(derive(hi, lo, TAG_FALLBACK, seeds[j]), m)
        if get_bit(bv[0], pos):
            return bv_rank1(bv, pos)
    ones = np.int64(bv[1][-1])
    if final_count == 0:
        return 0
    return ones + fastrange(derive(hi, lo, TAG_FALLBACK, final_seed), final_count)


@nb.njit(cache=True)
def _query_many(fb, hi, lo):
    out = np.empty(hi.shape[0], dtype=np.int64)
    for t in range(hi.shape[0]):
        out[t] = fallback_query(fb, hi[t], lo[t])
    return out


class Fallback1Phf:
    """Bijection from its key set onto [0, n)."""

    def __init__(self, n: int, global_seed: int, sizes: np.ndarray, bits: BitVec,
                 final_seed: int, final_count: int):
        self.n = n
        self.global_seed = global_seed
        self.sizes = np.asarray(sizes, dtype=np.int64)
        self.bits = bits
        self.final_seed = final_seed
        self.final_count = final_count
        self.starts = np.concatenate([[0], np.cumsum(self.sizes)]).astype(np.int64)
        self.seeds = np.array([sub_seed(global_seed, TAG_FALLBACK, j)
                               for j in range(len(self.sizes))], dtype=np.uint64)

    @classmethod
    def build(cls, hi, lo, global_seed: int = 0) -> "Fallback1Phf":
        hi = np.ascontiguousarray(hi, dtype=np.uint64)
        lo = np.ascontiguousarray(lo, dtype=np.uint64)
        n = hi.shape[0]
        sizes, chunks = [], []
        rest = np.arange(n)
        while rest.shape[0] > STRAGGLERS:
            j = len(sizes)
            if j >= MAX_LAYERS:
                raise FallbackBuildError(f"{rest.shape[0]} keys left after {MAX_LAYERS} layers")
            m = rest.shape[0]
            slot = range_many(hi[rest], lo[rest], TAG_FALLBACK, sub_seed(global_seed, TAG_FALLBACK, j), m)
            counts = np.bincount(slot, minlength=m)
            chunks.append(counts == 1)
            sizes.append(m)
            rest = rest[counts[slot] != 1]
        bits = BitVec.from_bits(np.concatenate(chunks) if chunks else np.zeros(0, dtype=bool))
        r = rest.shape[0]
        final_seed = 0
        if r:
            base = sub_seed(global_seed, TAG_FALLBACK, 1 << 32)
            final_seed = int(_brute_seed(hi[rest], lo[rest], np.uint64(base), BRUTE_LIMIT))
            if final_seed == 0:
                raise FallbackBuildError(f"no bijective seed for the last {r} keys")
        return cls(n, global_seed, np.array(sizes, dtype=np.int64), bits, final_seed, r)

    @property
    def nb(self):
        return (self.bits.nb, self.starts, self.seeds, np.uint64(self.final_seed),
                np.int64(self.final_count))

    def query_many(self, hi, lo) -> np.ndarray:
        return _query_many(self.nb, np.ascontiguousarray(hi, dtype=np.uint64),
                           np.ascontiguousarray(lo, dtype=np.uint64))

    def write(self, w: Writer) -> None:
        w.u64(self.n)
        w.u64(self.global_seed)
        w.words(self.sizes.astype(np.uint64))
        w.u64(self.final_seed)
        w.u64(self.final_count)
        self.bits.write(w)

    @classmethod
    def read(cls, rd: Reader) -> "Fallback1Phf":
        n = rd.u64()
        gseed = rd.u64()
        sizes = rd.words().astype(np.int64)
        final_seed = rd.u64()
        final_count = rd.u64()
        bits = BitVec.read(rd)
        if bits.length != int(sizes.sum()) or bits.ones + final_count != n:
            raise FormatError("inconsistent fallback structure")
        return cls(n, gseed, sizes, bits, final_seed, final_count)
