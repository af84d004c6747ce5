"""k-perfect RecSplit.

Keys are hashed to buckets of expected size b.  Inside a bucket a splitting
tree is built by brute force: nodes larger than ``k * ell`` split in two with
a complete left subtree, nodes of at most ``k * ell`` keys split into leaves
of k keys (the last one possibly smaller).  Full leaves need no seed.

Only the final leaf of a bucket can be short.  Short leaves of consecutive
buckets are merged into shared bins: a bucket's tree starts at bin
``floor(x / k)`` (x = keys before the bucket); when the pending short-leaf
keys plus this bucket's short leaf reach k, the bucket's last bin collects
them, and an extra seed splits away exactly the keys needed to fill it.

Seeds are Golomb-Rice coded in DFS order with a width per node size, the
merge seed (if any) right after the bucket's tree.  Three Elias-Fano
sequences give, per bucket, the keys, seeds and low bits before it.
"""
from __future__ import annotations

import math

import numba as nb
import numpy as np

from .base import SCHEME_RECSPLIT, MkPhf, as_hashes
from .hashing import (TAG_MERGE, TAG_RS_BUCKET, TAG_SPLIT, derive, derive_sw, fastrange,
                      range_many, seed_word, sub_seed)
from .serial import FormatError, Reader, Writer
from .succinct import EliasFanoSeq, GolombRiceSeq, ef_get, gr_get

U64 = np.uint64
MAX_TRIALS = 1 << 34
NO_SEED = -1


class RecSplitBuildError(RuntimeError):
    pass


def default_bucket_size(k: int) -> int:
    return 6000 if k >= 1000 else 2000


# --------------------------------------------------------------------------
# tree shape

@nb.njit(inline="always")
def left_size(m, unit):
    """Left child of a binary node: ceil(m / 2) rounded up to a multiple of ``unit``."""
    return ((m + 2 * unit - 1) // (2 * unit)) * unit


@nb.njit(inline="always")
def fanout(m, k, unit):
    if m <= k:
        return 0
    if m <= unit:
        return (m + k - 1) // k
    return 2


@nb.njit(inline="always")
def child_size(m, k, unit, c):
    if m <= unit:
        return min(k, m - c * k)
    left = left_size(m, unit)
    return left if c == 0 else m - left


@nb.njit(cache=True)
def rice_width(logp):
    """Width minimizing expected Rice bits L + 1/(1 - q^(2^L)) of a geometric seed."""
    if logp >= 0.0:
        return 0
    lq = math.log1p(-math.exp(logp))
    best, best_cost = 0, np.inf
    for L in range(63):
        cost = L - 1.0 / math.expm1(lq * 2.0 ** L)
        if cost < best_cost:
            best, best_cost = L, cost
    return best


@nb.njit(cache=True)
def split_log_prob(m, sizes):
    """log P[a seed splits m keys into exactly ``sizes``] (multinomial)."""
    lp = math.lgamma(m + 1.0)
    for c in sizes:
        if c > 0:
            lp += c * math.log(c / m) - math.lgamma(c + 1.0)
    return lp


@nb.njit(cache=True)
def _tables(maxm, k, unit):
    """Per node size: seeds in the subtree, their low bits, and the node's own width."""
    entries = np.zeros(maxm + 1, dtype=np.int64)
    bits = np.zeros(maxm + 1, dtype=np.int64)
    width = np.zeros(maxm + 1, dtype=np.int64)
    for m in range(k + 1, maxm + 1):
        f = fanout(m, k, unit)
        sizes = np.empty(f, dtype=np.int64)
        for c in range(f):
            sizes[c] = child_size(m, k, unit, c)
        w = rice_width(split_log_prob(m, sizes))
        width[m] = w
        entries[m] = 1
        bits[m] = w
        for c in range(f):
            entries[m] += entries[sizes[c]]
            bits[m] += bits[sizes[c]]
    return entries, bits, width


@nb.njit(cache=True)
def merge_width(need, r):
    sizes = np.empty(2, dtype=np.int64)
    sizes[0] = need
    sizes[1] = r - need
    return rice_width(split_log_prob(r, sizes))


@nb.njit(inline="always")
def _node_base(salt, m):
    return U64(salt) ^ (U64(m) << U64(40))


def split_tree_shape(bucket_size: int, k: int, ell: int):
    """Nested ``(size, children)`` description of the splitting tree; leaves have no children."""
    if bucket_size < 0:
        raise ValueError("bucket size must be non-negative")
    unit = k * ell

    def node(m):
        f = int(fanout(m, k, unit))
        return (m, tuple(node(int(child_size(m, k, unit, c))) for c in range(f)))
    return node(bucket_size)


def leaf_sizes(bucket_size: int, k: int, ell: int) -> list[int]:
    out = []

    def walk(t):
        if t[1]:
            for c in t[1]:
                walk(c)
        elif t[0]:
            out.append(t[0])
    walk(split_tree_shape(bucket_size, k, ell))
    return out


# --------------------------------------------------------------------------
# seed search

@nb.njit(cache=True)
def _search(hi, lo, s0, m, bounds, tag, base, max_trials, counts):
    """Smallest seed sending keys s0..s0+m-1 to the child ranges given by ``bounds``."""
    f = bounds.shape[0]
    for t in range(max_trials):
        sw = seed_word(tag, base + U64(t))
        for c in range(f):
            counts[c] = 0
        ok = True
        for j in range(s0, s0 + m):
            v = fastrange(derive_sw(hi[j], lo[j], sw), m)
            c = 0
            while v >= bounds[c]:
                c += 1
            counts[c] += 1
            if counts[c] > bounds[c] - (bounds[c - 1] if c > 0 else 0):
                ok = False
                break
        if ok:
            return t
    return NO_SEED


@nb.njit(cache=True)
def _partition(hi, lo, s0, m, bounds, tag, base, tmp_hi, tmp_lo, fill):
    sw = seed_word(tag, base)
    f = bounds.shape[0]
    fill[0] = 0
    for c in range(1, f):
        fill[c] = bounds[c - 1]
    for j in range(s0, s0 + m):
        v = fastrange(derive_sw(hi[j], lo[j], sw), m)
        c = 0
        while v >= bounds[c]:
            c += 1
        tmp_hi[fill[c]] = hi[j]
        tmp_lo[fill[c]] = lo[j]
        fill[c] += 1
    for j in range(m):
        hi[s0 + j] = tmp_hi[j]
        lo[s0 + j] = tmp_lo[j]


@nb.njit(cache=True)
def _build_buckets(hi, lo, starts, k, unit, salt, max_trials, width_tab, seeds, widths,
                   cum_entries, trials):
    """Build all trees (keys are reordered in place).  Returns -1 or a failing bucket."""
    nbk = starts.shape[0] - 1
    maxm = 1
    for b in range(nbk):
        maxm = max(maxm, starts[b + 1] - starts[b])
    tmp_hi = np.empty(maxm, dtype=np.uint64)
    tmp_lo = np.empty(maxm, dtype=np.uint64)
    counts = np.zeros(maxm + 2, dtype=np.int64)
    fill = np.zeros(maxm + 2, dtype=np.int64)
    stack_s = np.empty(4096, dtype=np.int64)
    stack_m = np.empty(4096, dtype=np.int64)
    e = 0
    x = 0
    for b in range(nbk):
        cum_entries[b] = e
        c = starts[b + 1] - starts[b]
        top = 0
        stack_s[0] = starts[b]
        stack_m[0] = c
        top = 1
        while top > 0:
            top -= 1
            s0 = stack_s[top]
            m = stack_m[top]
            f = fanout(m, k, unit)
            if f == 0:
                continue
            bounds = np.empty(f, dtype=np.int64)
            acc = 0
            for ci in range(f):
                acc += child_size(m, k, unit, ci)
                bounds[ci] = acc
            base = _node_base(salt, m)
            t = _search(hi, lo, s0, m, bounds, TAG_SPLIT, base, max_trials, counts)
            if t < 0:
                return b
            seeds[e] = t
            widths[e] = width_tab[m]
            trials[e] = t + 1
            e += 1
            _partition(hi, lo, s0, m, bounds, TAG_SPLIT, base + U64(t), tmp_hi, tmp_lo, fill)
            # push right to left so the leftmost child is expanded first (preorder)
            for ci in range(f - 1, -1, -1):
                stack_s[top] = s0 + (bounds[ci - 1] if ci > 0 else 0)
                stack_m[top] = bounds[ci] - (bounds[ci - 1] if ci > 0 else 0)
                top += 1
        r = c % k
        R = x % k
        if r > 0 and R + r > k:
            need = k - R
            bounds = np.empty(2, dtype=np.int64)
            bounds[0] = need
            bounds[1] = r
            s0 = starts[b + 1] - r
            base = _node_base(salt, r)
            t = _search(hi, lo, s0, r, bounds, TAG_MERGE, base, max_trials, counts)
            if t < 0:
                return b
            seeds[e] = t
            widths[e] = merge_width(need, r)
            trials[e] = t + 1
            e += 1
        x += c
    cum_entries[nbk] = e
    return -1


# --------------------------------------------------------------------------
# query

@nb.njit(inline="always")
def _rs_query(hi, lo, bseed, nbk, k, unit, salt, nbins, ck, ce, cb, gr_lower, gr_unary,
              entries_tab, bits_tab, width_tab):
    b = fastrange(derive(hi, lo, TAG_RS_BUCKET, bseed), nbk)
    x = np.int64(ef_get(ck, b))
    x1 = np.int64(ef_get(ck, b + 1))
    e = np.int64(ef_get(ce, b))
    lp = np.int64(ef_get(cb, b))
    m = x1 - x
    left = 0
    while m > k:
        w = width_tab[m]
        s = gr_get(gr_lower, gr_unary, e, lp, w)
        e += 1
        lp += w
        v = fastrange(derive(hi, lo, TAG_SPLIT, _node_base(salt, m) + s), m)
        if m <= unit:
            # children below are leaves and carry no seeds
            c = v // k
            left += c * k
            m = min(k, m - c * k)
        else:
            L = left_size(m, unit)
            if v < L:
                m = L
            else:
                e += entries_tab[L]
                lp += bits_tab[L]
                left += L
                m -= L
    if m == k:
        return x // k + left // k
    # short leaf
    R = x % k
    if R + m >= k:
        need = k - R
        if need == m:
            return x1 // k - 1
        mw = merge_width(need, m)
        e_end = np.int64(ef_get(ce, b + 1)) - 1
        lp_end = np.int64(ef_get(cb, b + 1)) - mw
        s = gr_get(gr_lower, gr_unary, e_end, lp_end, mw)
        if fastrange(derive(hi, lo, TAG_MERGE, _node_base(salt, m) + s), m) < need:
            return x1 // k - 1
    # scan forward to the bucket that completes the pending bin
    xx = x1
    for bb in range(b + 1, nbk):
        xn = np.int64(ef_get(ck, bb + 1))
        if xx % k + (xn - xx) % k >= k:
            return xn // k - 1
        xx = xn
    return nbins - 1


@nb.njit(cache=True)
def _query_many(hi, lo, bseed, nbk, k, unit, salt, nbins, ck, ce, cb, gr_lower, gr_unary,
                entries_tab, bits_tab, width_tab):
    out = np.empty(hi.shape[0], dtype=np.int64)
    for i in range(hi.shape[0]):
        out[i] = _rs_query(hi[i], lo[i], bseed, nbk, k, unit, salt, nbins, ck, ce, cb, gr_lower,
                           gr_unary, entries_tab, bits_tab, width_tab)
    return out


@nb.njit(cache=True)
def _scan_lengths(hi, lo, bseed, nbk, k, unit, ck):
    """Buckets visited forward by short-leaf keys (0 for keys in full leaves)."""
    out = np.zeros(hi.shape[0], dtype=np.int64)
    for i in range(hi.shape[0]):
        b = fastrange(derive(hi[i], lo[i], TAG_RS_BUCKET, bseed), nbk)
        x = np.int64(ef_get(ck, b))
        xx = np.int64(ef_get(ck, b + 1))
        if (xx - x) % k == 0:
            continue
        steps = 0
        for bb in range(b + 1, nbk):
            xn = np.int64(ef_get(ck, bb + 1))
            steps += 1
            if xx % k + (xn - xx) % k >= k:
                break
            xx = xn
        out[i] = steps
    return out


@nb.njit(cache=True)
def _all_widths(counts, k, unit, width_tab, total):
    """Rice widths of every stored seed, in storage order."""
    out = np.empty(total, dtype=np.int64)
    stack = np.empty(4096, dtype=np.int64)
    e = 0
    x = 0
    for b in range(counts.shape[0]):
        c = counts[b]
        stack[0] = c
        top = 1
        while top > 0:
            top -= 1
            m = stack[top]
            f = fanout(m, k, unit)
            if f == 0:
                continue
            out[e] = width_tab[m]
            e += 1
            for ci in range(f - 1, -1, -1):
                stack[top] = child_size(m, k, unit, ci)
                top += 1
        r = c % k
        R = x % k
        if r > 0 and R + r > k:
            out[e] = merge_width(k - R, r)
            e += 1
        x += c
    return out[:e]


def find_split_seed(hi, lo, child_sizes, tag: int = TAG_SPLIT, base: int = 0,
                    max_trials: int = MAX_TRIALS) -> int:
    """Smallest seed whose hash splits the keys into exactly ``child_sizes`` (in order)."""
    hi = np.ascontiguousarray(hi, dtype=np.uint64)
    lo = np.ascontiguousarray(lo, dtype=np.uint64)
    sizes = np.asarray(child_sizes, dtype=np.int64)
    m = hi.shape[0]
    if int(sizes.sum()) != m or np.any(sizes < 0):
        raise ValueError("child sizes must be non-negative and sum to the key count")
    if sizes.shape[0] <= 1:
        return 0
    t = _search(hi, lo, 0, m, np.cumsum(sizes), tag, U64(base), max_trials,
                np.zeros(sizes.shape[0], dtype=np.int64))
    if t < 0:
        raise RecSplitBuildError(f"no split seed within {max_trials} trials")
    return int(t)


# --------------------------------------------------------------------------

class RecSplitMkPhf(MkPhf):
    scheme_id = SCHEME_RECSPLIT

    def __init__(self, n, k, b, ell, global_seed, cum_keys, cum_entries, cum_bits, seeds):
        self.n = n
        self.k = k
        self.b = b
        self.ell = ell
        self.global_seed = global_seed
        self.cum_keys = cum_keys
        self.cum_entries = cum_entries
        self.cum_bits = cum_bits
        self.seeds = seeds
        self.unit = k * ell
        self.num_buckets = max(1, -(-n // b))
        self.bucket_seed = sub_seed(global_seed, TAG_RS_BUCKET)
        self.salt = sub_seed(global_seed, TAG_SPLIT)
        counts = np.diff(cum_keys.to_array().astype(np.int64))
        self.entries_tab, self.bits_tab, self.width_tab = _tables(max(int(counts.max()), 1), k,
                                                                  self.unit)
        self.stats: dict = {}

    @classmethod
    def build(cls, keys, k: int, b: int | None = None, ell: int = 2, global_seed: int = 0,
              max_trials: int = MAX_TRIALS) -> "RecSplitMkPhf":
        if k < 1 or ell < 1:
            raise ValueError("k and ell must be positive")
        b = default_bucket_size(k) if b is None else int(b)
        if b < 1:
            raise ValueError("bucket size must be positive")
        hi, lo = as_hashes(keys, global_seed)
        n = hi.shape[0]
        if n == 0:
            raise ValueError("need at least one key")
        nbk = max(1, -(-n // b))
        bseed = sub_seed(global_seed, TAG_RS_BUCKET)
        bucket = range_many(hi, lo, TAG_RS_BUCKET, bseed, nbk)
        order = np.lexsort((lo, hi, bucket))
        hi, lo = hi[order].copy(), lo[order].copy()
        counts = np.bincount(bucket, minlength=nbk).astype(np.int64)
        starts = np.concatenate([[0], np.cumsum(counts)]).astype(np.int64)
        unit = k * ell
        _, _, width_tab = _tables(max(int(counts.max()), 1), k, unit)
        cap = n + nbk  # seeds: fewer than one per k keys plus one merge seed per bucket
        seeds = np.zeros(cap, dtype=np.uint64)
        widths = np.zeros(cap, dtype=np.int64)
        trials = np.zeros(cap, dtype=np.int64)
        cum_entries = np.zeros(nbk + 1, dtype=np.int64)
        salt = sub_seed(global_seed, TAG_SPLIT)
        failed = _build_buckets(hi, lo, starts, k, unit, U64(salt), max_trials, width_tab,
                                seeds, widths, cum_entries, trials)
        if failed >= 0:
            raise RecSplitBuildError(f"bucket {failed} ({counts[failed]} keys): no seed within "
                                     f"{max_trials} trials; rebuild with another global seed")
        e = int(cum_entries[-1])
        seeds, widths = seeds[:e], widths[:e]
        lower_pos = np.concatenate([[0], np.cumsum(widths)]).astype(np.int64)
        phf = cls(n, k, b, ell, global_seed, EliasFanoSeq.encode(starts),
                  EliasFanoSeq.encode(cum_entries), EliasFanoSeq.encode(lower_pos[cum_entries]),
                  GolombRiceSeq.encode(seeds, widths))
        phf.stats = {"trials": trials[:e], "bucket_sizes": counts}
        return phf

    def _nb_args(self):
        return (U64(self.bucket_seed), self.num_buckets, self.k, self.unit, U64(self.salt),
                self.num_bins, self.cum_keys.nb, self.cum_entries.nb, self.cum_bits.nb,
                self.seeds.lower, self.seeds.unary.nb, self.entries_tab, self.bits_tab,
                self.width_tab)

    def query_many(self, hi, lo) -> np.ndarray:
        return _query_many(np.ascontiguousarray(hi, dtype=np.uint64),
                           np.ascontiguousarray(lo, dtype=np.uint64), *self._nb_args())

    def bucket_sizes(self) -> np.ndarray:
        return np.diff(self.cum_keys.to_array().astype(np.int64))

    def scan_lengths(self, hi, lo) -> np.ndarray:
        return _scan_lengths(np.ascontiguousarray(hi, dtype=np.uint64),
                             np.ascontiguousarray(lo, dtype=np.uint64), U64(self.bucket_seed),
                             self.num_buckets, self.k, self.unit, self.cum_keys.nb)

    def expected_entries(self) -> np.ndarray:
        """Seeds per bucket implied by the bucket sizes alone (tree plus merge seed)."""
        counts = self.bucket_sizes()
        x = np.concatenate([[0], np.cumsum(counts)[:-1]])
        r, R = counts % self.k, x % self.k
        return self.entries_tab[counts] + ((r > 0) & (R + r > self.k))

    def _write(self, w: Writer) -> None:
        for v in (self.n, self.k, self.b, self.ell, self.global_seed):
            w.u64(v)
        self.cum_keys.write(w)
        self.cum_entries.write(w)
        self.cum_bits.write(w)
        self.seeds.write(w)

    @classmethod
    def _read(cls, rd: Reader) -> "RecSplitMkPhf":
        n, k, b, ell, gseed = (rd.u64() for _ in range(5))
        if n < 1 or k < 1 or b < 1 or ell < 1:
            raise FormatError("bad RecSplit header")
        ck, ce, cb = EliasFanoSeq.read(rd), EliasFanoSeq.read(rd), EliasFanoSeq.read(rd)
        nbk = max(1, -(-n // b))
        if not (len(ck) == len(ce) == len(cb) == nbk + 1) or ck[nbk] != n:
            raise FormatError("RecSplit directory does not match the header")
        counts = np.diff(ck.to_array().astype(np.int64))
        _, _, width_tab = _tables(max(int(counts.max()), 1), k, k * ell)
        widths = _all_widths(counts, k, k * ell, width_tab, ce[nbk])
        if widths.shape[0] != ce[nbk]:
            raise FormatError("seed count does not match the bucket sizes")
        seeds = GolombRiceSeq.read(rd, widths)
        return cls(n, k, b, ell, gseed, ck, ce, cb, seeds)
