"""k-perfect PaCHash.

Keys are hashed to ceil(a * n / k) buckets, sorted by bucket and cut into
bins of k consecutive keys.  For every bin i we store p_i, a bucket
overlapping its start, in an Elias-Fano sequence.  A key of bucket b lies
in one of the bins

    i = max(pred(b - 1), 0)  ...  j - 1 = pred(b)

(pred(x) = last index with p <= x).  If that range holds a single bin we are
done; otherwise the offset inside the range is fetched bit by bit from a
1-bit retrieval structure.

When a bin starts exactly where a new bucket starts, any p_i between the
previous bin's last bucket and this bin's first bucket is valid.  We pick
an empty bucket if there is one, else the smaller of the two buckets, since
every key of bucket p_i becomes ambiguous.
"""
from __future__ import annotations

import math

import numba as nb
import numpy as np

from .base import SCHEME_PACHASH, MkPhf, as_hashes
from .hashing import TAG_BITKEY_HI, TAG_BITKEY_LO, TAG_PACHASH, derive, fastrange, range_many, \
    sub_seed
from .retrieval import RetrievalFn, bit_keys, ret_query
from .serial import FormatError, Reader, Writer
from .succinct import EliasFanoSeq, ef_get, ef_pred_index

U64 = np.uint64
SCAN_STEPS = 8


def num_buckets(n: int, k: int, a: float) -> int:
    return max(1, math.ceil(a * n / k))


def choose_cut_points(buckets_sorted: np.ndarray, k: int, nbuckets: int) -> np.ndarray:
    """p_i for every bin given the sorted bucket of each key."""
    n = buckets_sorted.shape[0]
    m = -(-n // k)
    first = buckets_sorted[np.arange(m) * k]
    p = first.copy()
    if m > 1:
        last_prev = buckets_sorted[np.arange(1, m) * k - 1]
        f = first[1:]
        counts = np.bincount(buckets_sorted, minlength=nbuckets)
        boundary = f != last_prev
        gap = boundary & (f - last_prev >= 2)
        # an empty bucket between the two: nobody becomes ambiguous
        p[1:][gap] = f[gap] - 1
        adj = boundary & ~gap
        smaller_prev = counts[last_prev] < counts[f]
        p[1:][adj & smaller_prev] = last_prev[adj & smaller_prev]
    return p


@nb.njit(inline="always")
def candidate_range(ef, m, b):
    """(i, j): candidate bins i..j-1 for bucket b."""
    i = ef_pred_index(ef, b - 1) if b > 0 else -1
    if i < 0:
        i = 0
    # successor by a short forward scan, predecessor search as fallback
    j = i
    steps = 0
    while j < m and np.int64(ef_get(ef, j)) <= b and steps < SCAN_STEPS:
        j += 1
        steps += 1
    if steps == SCAN_STEPS and j < m and np.int64(ef_get(ef, j)) <= b:
        j = ef_pred_index(ef, b) + 1
    return i, j


@nb.njit(inline="always")
def offset_width(d):
    w = 0
    while (1 << w) < d:
        w += 1
    return w


@nb.njit(inline="always")
def _pc_query(hi, lo, bseed, nbk, m, ef, ret):
    b = fastrange(derive(hi, lo, TAG_PACHASH, bseed), nbk)
    i, j = candidate_range(ef, m, b)
    if j - i <= 1:
        return i
    off = 0
    for q in range(offset_width(j - i)):
        bit = ret_query(ret, derive(hi, lo, TAG_BITKEY_HI, U64(q)), derive(hi, lo, TAG_BITKEY_LO, U64(q)))
        off |= np.int64(bit) << q
    return min(i + off, m - 1)


@nb.njit(cache=True)
def _query_many(hi, lo, bseed, nbk, m, ef, ret):
    out = np.empty(hi.shape[0], dtype=np.int64)
    for t in range(hi.shape[0]):
        out[t] = _pc_query(hi[t], lo[t], bseed, nbk, m, ef, ret)
    return out


@nb.njit(cache=True)
def _ranges_many(buckets, m, ef):
    i_out = np.empty(buckets.shape[0], dtype=np.int64)
    j_out = np.empty(buckets.shape[0], dtype=np.int64)
    for t in range(buckets.shape[0]):
        i_out[t], j_out[t] = candidate_range(ef, m, buckets[t])
    return i_out, j_out


class PaCHashMkPhf(MkPhf):
    scheme_id = SCHEME_PACHASH

    def __init__(self, n, k, a, global_seed, cuts: EliasFanoSeq, retrieval: RetrievalFn):
        self.n = n
        self.k = k
        self.a = float(a)
        self.global_seed = global_seed
        self.cuts = cuts
        self.retrieval = retrieval
        self.num_buckets = num_buckets(n, k, self.a)
        self.bucket_seed = sub_seed(global_seed, TAG_PACHASH)
        self.stats: dict = {}

    @classmethod
    def build(cls, keys, k: int, a: float | None = None, global_seed: int = 0) -> "PaCHashMkPhf":
        if k < 1:
            raise ValueError("k must be positive")
        a = float(k if a is None else a)
        if not a >= 1:
            raise ValueError("a must be at least 1")
        hi, lo = as_hashes(keys, global_seed)
        n = hi.shape[0]
        if n == 0:
            raise ValueError("need at least one key")
        nbk = num_buckets(n, k, a)
        bseed = sub_seed(global_seed, TAG_PACHASH)
        bucket = range_many(hi, lo, TAG_PACHASH, bseed, nbk)
        order = np.lexsort((lo, hi, bucket))
        hi, lo, bucket = hi[order], lo[order], bucket[order]
        cuts = EliasFanoSeq.encode(choose_cut_points(bucket, k, nbk))
        m = -(-n // k)
        i, j = _ranges_many(bucket, m, cuts.nb)
        rank = np.arange(n) // k
        if np.any(rank < i) or np.any(rank >= j):
            raise AssertionError("bin outside its candidate range")
        amb = np.flatnonzero(j - i > 1)
        widths = np.array([int(offset_width(int(d))) for d in (j - i)[amb]], dtype=np.int64)
        offs = (rank - i)[amb]
        ehi, elo, evals = [], [], []
        for q in range(int(widths.max()) if amb.shape[0] else 0):
            sel = amb[widths > q]
            bhi, blo = bit_keys(hi[sel], lo[sel], q)
            ehi.append(bhi)
            elo.append(blo)
            evals.append((offs[widths > q] >> q) & 1)
        cat = (lambda xs, dt: np.concatenate(xs).astype(dt) if xs else np.zeros(0, dtype=dt))
        ret = RetrievalFn.build(cat(ehi, np.uint64), cat(elo, np.uint64), cat(evals, np.uint64), 1,
                                sub_seed(global_seed, TAG_BITKEY_HI))
        phf = cls(n, k, a, global_seed, cuts, ret)
        phf.stats = {"ambiguous_keys": int(amb.shape[0]), "retrieval_entries": ret.n}
        return phf

    def _buckets(self, hi, lo):
        return range_many(hi, lo, TAG_PACHASH, self.bucket_seed, self.num_buckets)

    def query_many(self, hi, lo) -> np.ndarray:
        return _query_many(np.ascontiguousarray(hi, dtype=np.uint64),
                           np.ascontiguousarray(lo, dtype=np.uint64), U64(self.bucket_seed),
                           self.num_buckets, self.num_bins, self.cuts.nb, self.retrieval.nb)

    def candidate_ranges(self, buckets) -> tuple[np.ndarray, np.ndarray]:
        return _ranges_many(np.ascontiguousarray(buckets, dtype=np.int64), self.num_bins,
                            self.cuts.nb)

    def consults_retrieval(self, hi, lo) -> np.ndarray:
        """Per query: whether it has to ask the retrieval structure."""
        i, j = self.candidate_ranges(self._buckets(hi, lo))
        return j - i > 1

    def _write(self, w: Writer) -> None:
        w.u64(self.n)
        w.u64(self.k)
        w.f64(self.a)
        w.u64(self.global_seed)
        self.cuts.write(w)
        self.retrieval.write(w)

    @classmethod
    def _read(cls, rd: Reader) -> "PaCHashMkPhf":
        n, k = rd.u64(), rd.u64()
        a = rd.f64()
        gseed = rd.u64()
        if n < 1 or k < 1 or not a >= 1:
            raise FormatError("bad PaCHash header")
        cuts = EliasFanoSeq.read(rd)
        if len(cuts) != -(-n // k):
            raise FormatError("cut point count does not match n / k")
        return cls(n, k, a, gseed, cuts, RetrievalFn.read(rd))
