"""Minimal k-perfect hashing by bucket placement.

Keys are grouped into ceil(n / lambda) buckets through the skewed
assignment beta_k, so early buckets are large and late ones small.  Buckets
are placed largest first: each gets the smallest seed whose range hash
sends all of its keys to bins that still have room (several keys of one
bucket may share a bin).  The range hash picks one of n slots and the bin
is slot // k, so a short last bin is hit in proportion to its capacity.
A query is one bucket lookup, one seed decode and one range hash.
"""
from __future__ import annotations

import math

import numba as nb
import numpy as np

from .base import SCHEME_BUCKET, MkPhf, as_hashes, last_capacity
from .bucket_opt import DEFAULT_GRID, beta_curve
from .hashing import (TAG_BUCKET, TAG_PLACE, derive, derive_sw, fastrange, seed_word, sub_seed,
                      unit)
from .serial import FormatError, Reader, Writer
from .succinct import (GolombRiceSeq, gr_get, pack_fixed, read_bits, read_packed, unpack_fixed,
                       write_packed)

U64 = np.uint64
MODES = ("compact", "rice")
MAX_TRIALS = 1 << 34
BUILD_RETRIES = 3
DEFAULT_LAMBDA = {1: 7.0, 2: 7.0, 4: 8.0, 10: 12.0, 100: 60.0, 1000: 250.0}


class BucketBuildError(RuntimeError):
    pass


def default_lambda(k: int) -> float:
    if k in DEFAULT_LAMBDA:
        return DEFAULT_LAMBDA[k]
    # interpolate on log k between the tuned points
    ks = np.array(sorted(DEFAULT_LAMBDA))
    ls = np.array([DEFAULT_LAMBDA[x] for x in ks])
    return float(np.interp(math.log(k), np.log(ks), ls))


@nb.njit(inline="always")
def bucket_index(u, scale, nbuckets, beta):
    """min(floor(scale * beta(u)), nbuckets - 1) with beta tabulated on a uniform grid."""
    g = beta.shape[0] - 1
    pos = u * g
    i = min(np.int64(pos), g - 1)
    y = beta[i] + (pos - i) * (beta[i + 1] - beta[i])
    return min(np.int64(scale * y), nbuckets - 1)


@nb.njit(inline="always")
def bucket_of(hi, lo, bseed, scale, nbuckets, beta):
    return bucket_index(unit(derive(hi, lo, TAG_BUCKET, bseed)), scale, nbuckets, beta)


@nb.njit(cache=True)
def bucket_index_many(u, scale, nbuckets, beta):
    out = np.empty(u.shape[0], dtype=np.int64)
    for i in range(u.shape[0]):
        out[i] = bucket_index(u[i], scale, nbuckets, beta)
    return out


@nb.njit(cache=True)
def _buckets(hi, lo, bseed, scale, nbuckets, beta):
    out = np.empty(hi.shape[0], dtype=np.int64)
    for i in range(hi.shape[0]):
        out[i] = bucket_of(hi[i], lo[i], bseed, scale, nbuckets, beta)
    return out


@nb.njit(cache=True)
def _place(hi, lo, starts, proc, caps, salt, max_trials, seeds, trials):
    """Place buckets in the order ``proc``.  Returns -1 or the index of a failing bucket."""
    m = caps.shape[0]
    # hash to a slot, then slot // k: a short last bin draws proportionally less
    n = np.sum(caps)
    k = caps[0]
    occ = np.zeros(m, dtype=np.int64)
    tmp = np.empty(np.max(starts[1:] - starts[:-1]) if starts.shape[0] > 1 else 1, dtype=np.int64)
    for b in proc:
        s0, s1 = starts[b], starts[b + 1]
        if s0 == s1:
            seeds[b] = 0
            trials[b] = 0
            continue
        placed = False
        for s in range(max_trials):
            sw = seed_word(TAG_PLACE, U64(salt) + U64(s))
            ok = True
            used = 0
            for j in range(s0, s1):
                x = fastrange(derive_sw(hi[j], lo[j], sw), n) // k
                if occ[x] >= caps[x]:
                    ok = False
                    break
                occ[x] += 1
                tmp[used] = x
                used += 1
            if ok:
                seeds[b] = s
                trials[b] = s + 1
                placed = True
                break
            for j in range(used):
                occ[tmp[j]] -= 1
        if not placed:
            return b
    return -1


@nb.njit(inline="always")
def _bucket_query(hi, lo, bseed, scale, nbuckets, beta, salt, n, k, mode, packed, width, gr_lower,
                  gr_unary, rice_L):
    b = bucket_of(hi, lo, bseed, scale, nbuckets, beta)
    if mode == 0:
        s = read_bits(packed, b * width, width)
    else:
        s = gr_get(gr_lower, gr_unary, b, b * rice_L, rice_L)
    return fastrange(derive(hi, lo, TAG_PLACE, U64(salt) + s), n) // k


@nb.njit(cache=True)
def _query_many(hi, lo, bseed, scale, nbuckets, beta, salt, n, k, mode, packed, width, gr_lower,
                gr_unary, rice_L):
    out = np.empty(hi.shape[0], dtype=np.int64)
    for i in range(hi.shape[0]):
        out[i] = _bucket_query(hi[i], lo[i], bseed, scale, nbuckets, beta, salt, n, k, mode, packed,
                               width, gr_lower, gr_unary, rice_L)
    return out


def encode_seeds(seeds: np.ndarray, mode: str):
    """Compact: fixed width ceil(log2(max+1)) (at least 1).  Rice: global L from the mean."""
    seeds = np.ascontiguousarray(seeds, dtype=np.uint64)
    if mode == "compact":
        top = int(seeds.max()) if seeds.shape[0] else 0
        width = max(1, top.bit_length())
        return pack_fixed(seeds, width), width
    if mode == "rice":
        mean = float(seeds.mean()) if seeds.shape[0] else 0.0
        L = max(0, int(math.floor(math.log2(mean + 1))))
        return GolombRiceSeq.encode(seeds, L), L
    raise ValueError(f"mode must be one of {MODES}")


class BucketMkPhf(MkPhf):
    scheme_id = SCHEME_BUCKET

    def __init__(self, n, k, lam, mode, global_seed, salt_index, grid_size, encoded, param):
        self.n = n
        self.k = k
        self.lam = float(lam)
        self.mode = mode
        self.global_seed = global_seed
        self.salt_index = salt_index
        self.grid_size = grid_size
        self.encoded = encoded
        self.param = param
        self.nbuckets = max(1, math.ceil(n / self.lam))
        self.scale = n / self.lam
        self.beta = beta_curve(k, grid_size)
        self.bucket_seed = sub_seed(global_seed, TAG_BUCKET)
        self.salt = sub_seed(global_seed, TAG_PLACE, salt_index)
        self.stats: dict = {}

    @classmethod
    def build(cls, keys, k: int, lam: float | None = None, mode: str = "rice",
              global_seed: int = 0, grid_size: int = DEFAULT_GRID,
              max_trials: int = MAX_TRIALS) -> "BucketMkPhf":
        if mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        if k < 1:
            raise ValueError("k must be positive")
        lam = default_lambda(k) if lam is None else float(lam)
        if lam <= 0:
            raise ValueError("lambda must be positive")
        hi, lo = as_hashes(keys, global_seed)
        n = hi.shape[0]
        if n == 0:
            raise ValueError("need at least one key")
        proto = cls(n, k, lam, mode, global_seed, 0, grid_size, None, 0)
        buckets = _buckets(hi, lo, U64(proto.bucket_seed), proto.scale, proto.nbuckets,
                           proto.beta.ys)
        order = np.argsort(buckets, kind="stable")
        s_hi, s_lo = hi[order], lo[order]
        counts = np.bincount(buckets, minlength=proto.nbuckets)
        starts = np.concatenate([[0], np.cumsum(counts)]).astype(np.int64)
        m = -(-n // k)
        caps = np.full(m, k, dtype=np.int64)
        caps[-1] = last_capacity(n, k)
        # largest buckets first (ties by index): bins are emptiest when they are placed
        proc = np.lexsort((np.arange(proto.nbuckets), -counts)).astype(np.int64)
        seeds = np.zeros(proto.nbuckets, dtype=np.int64)
        trials = np.zeros(proto.nbuckets, dtype=np.int64)
        for attempt in range(BUILD_RETRIES + 1):
            salt = sub_seed(global_seed, TAG_PLACE, attempt)
            failed = _place(s_hi, s_lo, starts, proc, caps, U64(salt), max_trials, seeds, trials)
            if failed < 0:
                break
        else:
            raise BucketBuildError(f"bucket {failed} ({counts[failed]} keys) not placeable "
                                   f"within {max_trials} seeds after {BUILD_RETRIES} retries")
        encoded, param = encode_seeds(seeds, mode)
        phf = cls(n, k, lam, mode, global_seed, attempt, grid_size, encoded, param)
        phf.stats = {"trials": trials, "bucket_sizes": counts, "seeds": seeds}
        return phf

    def _nb_args(self):
        if self.mode == "compact":
            packed, width = self.encoded, self.param
            gr_lower, gr_unary, L = _EMPTY_GR.lower, _EMPTY_GR.unary.nb, 0
        else:
            packed, width = np.zeros(1, dtype=np.uint64), 0
            gr_lower, gr_unary, L = self.encoded.lower, self.encoded.unary.nb, self.param
        return (U64(self.bucket_seed), self.scale, self.nbuckets, self.beta.ys, U64(self.salt),
                self.n, self.k, MODES.index(self.mode), packed, width, gr_lower, gr_unary, L)

    def query_many(self, hi, lo) -> np.ndarray:
        return _query_many(np.ascontiguousarray(hi, dtype=np.uint64),
                           np.ascontiguousarray(lo, dtype=np.uint64), *self._nb_args())

    def buckets_of(self, hi, lo) -> np.ndarray:
        return _buckets(np.ascontiguousarray(hi, dtype=np.uint64),
                        np.ascontiguousarray(lo, dtype=np.uint64), U64(self.bucket_seed),
                        self.scale, self.nbuckets, self.beta.ys)

    def seeds(self) -> np.ndarray:
        if self.mode == "compact":
            return unpack_fixed(self.encoded, self.nbuckets, self.param)
        return self.encoded.to_array()

    def _write(self, w: Writer) -> None:
        w.u64(self.n)
        w.u64(self.k)
        w.f64(self.lam)
        w.u64(self.grid_size)
        w.u64(MODES.index(self.mode))
        w.u64(self.global_seed)
        w.u64(self.salt_index)
        if self.mode == "compact":
            w.u64(self.param)
            write_packed(w, self.encoded, self.nbuckets * self.param)
        else:
            self.encoded.write(w)

    @classmethod
    def _read(cls, rd: Reader) -> "BucketMkPhf":
        n, k = rd.u64(), rd.u64()
        lam = rd.f64()
        grid, mode, gseed, salt_index = rd.u64(), rd.u64(), rd.u64(), rd.u64()
        if k < 1 or n < 1 or not lam > 0 or mode >= len(MODES) or grid < 1:
            raise FormatError("bad bucket-placement header")
        nbuckets = max(1, math.ceil(n / lam))
        if mode == 0:
            width = rd.u64()
            encoded = read_packed(rd, nbuckets * width)
            param = width
        else:
            encoded = GolombRiceSeq.read(rd)
            param = encoded.uniform_width
            if encoded.n != nbuckets:
                raise FormatError("seed count does not match bucket count")
        return cls(n, k, lam, MODES[mode], gseed, salt_index, grid, encoded, param)


_EMPTY_GR = GolombRiceSeq.encode(np.zeros(0, dtype=np.uint64), 0)
