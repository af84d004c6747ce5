"""Threshold-based bumping with overloading on every layer.

Each layer hashes its keys into ceil(n_layer / (k * gamma)) bins, so bins
are overfull on average.  A bin stores an index into a threshold vector
and keeps exactly the keys whose fingerprint is at or below that
threshold; the rest are bumped to the next layer.  Layers are added until
ceil(n/k) bins exist.  Whatever is still unplaced fills the empty slots
left behind: an Elias-Fano list of those slots plus a small minimal perfect
hash over the leftover keys.

Variants:

``plain``      index = largest threshold still below the (c+1)-smallest fingerprint.
``packed``     keys between the chosen threshold and the next one get a 1-bit
               retrieval entry saying whether they stay, which fills every
               overfull bin completely.
``consensus``  a bin's fingerprints are seeded by the previous choices in the
               stream, and a depth-first search picks choices so every bin
               wastes at most an acceptance limit of slots.
"""
from __future__ import annotations

import functools
from fractions import Fraction

import numba as nb
import numpy as np
from scipy import stats

from .base import SCHEME_THRESHOLD, MkPhf, as_hashes, last_capacity
from .fallback import Fallback1Phf, fallback_query
from .hashing import (TAG_BIN, TAG_BITKEY_HI, TAG_BITKEY_LO, TAG_FINGERPRINT, derive,
                      fastrange, mix64, range_many, sub_seed, unit, unit_many)
from .retrieval import RetrievalFn, bit_keys, ret_query
from .serial import FormatError, Reader, Writer
from .succinct import (EliasFanoSeq, ef_get, read_bits, read_packed, set_bits, write_bits,
                       write_packed)
from .threshold_opt import ThresholdVector, optimal_thresholds

U64 = np.uint64
VARIANTS = ("plain", "packed", "consensus")
MAX_LAYERS = 64
STEP_BUDGET = 10_000
LAYER_ATTEMPTS = 256
_GOLDEN = U64(0x9E3779B97F4A7C15)


class ThresholdBuildError(RuntimeError):
    pass


def select_threshold_for_bin(fingerprints, k: int, tv: ThresholdVector):
    """Largest index whose threshold lies below the (k+1)-smallest fingerprint.

    Returns ``(index, kept, bumped)`` with kept/bumped as fingerprint arrays.
    """
    fp = np.sort(np.asarray(fingerprints, dtype=float))
    x = fp[k] if fp.shape[0] > k else np.inf
    idx = int(np.searchsorted(tv.T, x, side="left")) - 1
    keep = fp <= tv.T[idx]
    return idx, fp[keep], fp[~keep]


def pack_bin(fingerprints, k: int, tv: ThresholdVector, capacity: int | None = None):
    """Packed selection for one bin: ``(index, kept, window, stay)``.

    ``window`` holds the sorted fingerprints in (T[index], T[index+1]]; each
    gets a retrieval bit, ``stay``, set for the smallest ones until the bin
    is full.  The window exists whenever index < t-1, even for a bin that
    plain selection already fills, because a query cannot tell the bins apart.
    """
    cap = k if capacity is None else capacity
    fp = np.sort(np.asarray(fingerprints, dtype=float))
    idx, kept, _ = select_threshold_for_bin(fp, cap, tv)
    if idx == len(tv.T) - 1:
        return idx, kept, fp[:0], np.zeros(0, dtype=bool)
    window = fp[(fp > tv.T[idx]) & (fp <= tv.T[idx + 1])]
    stay = np.arange(window.shape[0]) < cap - kept.shape[0]
    return idx, kept, window, stay


@functools.lru_cache(maxsize=None)
def _limit(bin_size: int, cap: int, T: tuple) -> int:
    if bin_size <= cap:
        return cap - bin_size
    j = np.arange(cap + 1)
    # mass of "kept == j" summed over all choices
    G = stats.binom.pmf(j[None, :], bin_size, np.asarray(T)[:, None]).sum(axis=0)
    acc = np.cumsum(G[::-1])  # acc[L] = sum_{j = cap-L}^{cap} G_j
    hit = np.nonzero(acc >= 1.0)[0]
    return int(hit[0]) if hit.shape[0] else cap


def consensus_accept_limit(bin_size: int, k: int, tv: ThresholdVector, capacity: int | None = None) -> int:
    """Smallest number of empty slots L such that, for a bin of ``bin_size``
    uniform fingerprints, the expected number of choices keeping between
    c - L and c keys is at least one (c = capacity, default k)."""
    cap = k if capacity is None else capacity
    return _limit(int(bin_size), int(cap), tuple(float(x) for x in tv.T))


# --------------------------------------------------------------------------
# numba kernels

@nb.njit(inline="always")
def consensus_seed(layer_seed, g, stream, w):
    end = g * w
    take = min(end, 64)
    prev = read_bits(stream, end - take, take) if take > 0 else U64(0)
    return mix64(U64(layer_seed) + mix64((U64(g) * _GOLDEN) ^ prev))


@nb.njit(cache=True)
def _consensus_layer(hi, lo, starts, caps, limits, g0, layer_seed, T, t, w, stream, budget):
    """Depth-first choice search for one layer.  ``limits[b]`` is bin b's limit.

    Returns the step count, or -1 when the budget runs out, or -2 when the
    search space is exhausted.
    """
    nbins = starts.shape[0] - 1
    nxt = np.full(nbins, t - 1, dtype=np.int64)
    b = 0
    steps = 0
    while b < nbins:
        steps += 1
        if steps > budget:
            return -1
        g = g0 + b
        s0, s1 = starts[b], starts[b + 1]
        cap = caps[b]
        lim = limits[b]
        seed = consensus_seed(layer_seed, g, stream, w)
        fp = np.empty(s1 - s0, dtype=np.float64)
        for j in range(s0, s1):
            fp[j - s0] = unit(derive(hi[j], lo[j], TAG_FINGERPRINT, seed))
        fp.sort()
        found = -1
        ch = nxt[b]
        while ch >= 0:
            kept = np.searchsorted(fp, T[ch], side="right")
            if kept <= cap and cap - kept <= lim:
                found = ch
                break
            if kept < cap - lim:
                break  # smaller thresholds keep even fewer
            ch -= 1
        if found >= 0:
            set_bits(stream, g * w, w, U64(found))
            nxt[b] = found - 1
            b += 1
        else:
            nxt[b] = t - 1
            set_bits(stream, g * w, w, U64(0))
            b -= 1
            if b < 0:
                return -2
    return steps


@nb.njit(cache=True)
def _consensus_kept(hi, lo, starts, g0, layer_seed, T, w, stream):
    keep = np.zeros(hi.shape[0], dtype=np.bool_)
    for b in range(starts.shape[0] - 1):
        g = g0 + b
        seed = consensus_seed(layer_seed, g, stream, w)
        thr = T[np.int64(read_bits(stream, g * w, w))]
        for j in range(starts[b], starts[b + 1]):
            keep[j] = unit(derive(hi[j], lo[j], TAG_FINGERPRINT, seed)) <= thr
    return keep


@nb.njit(inline="always")
def _threshold_query(hi, lo, variant, offs, seeds, fseeds, stream, w, T, t, ret, slots, fb):
    for layer in range(seeds.shape[0]):
        nbins = offs[layer + 1] - offs[layer]
        b = fastrange(derive(hi, lo, TAG_BIN, seeds[layer]), nbins)
        g = offs[layer] + b
        ch = np.int64(read_bits(stream, g * w, w))
        if variant == 2:
            fs = consensus_seed(fseeds[layer], g, stream, w)
        else:
            fs = fseeds[layer]
        fp = unit(derive(hi, lo, TAG_FINGERPRINT, fs))
        if fp <= T[ch]:
            return g
        if variant == 1 and ch < t - 1 and fp <= T[ch + 1]:
            if ret_query(ret, derive(hi, lo, TAG_BITKEY_HI, U64(layer)),
                         derive(hi, lo, TAG_BITKEY_LO, U64(layer))) & U64(1):
                return g
    if slots[2] == 0:
        return 0
    j = fallback_query(fb, hi, lo)
    return np.int64(ef_get(slots, j))


@nb.njit(cache=True)
def _query_many(hi, lo, variant, offs, seeds, fseeds, stream, w, T, t, ret, slots, fb):
    out = np.empty(hi.shape[0], dtype=np.int64)
    for i in range(hi.shape[0]):
        out[i] = _threshold_query(hi[i], lo[i], variant, offs, seeds, fseeds, stream, w, T, t,
                                  ret, slots, fb)
    return out


# --------------------------------------------------------------------------

def _gamma_fraction(gamma) -> Fraction:
    return Fraction(gamma).limit_denominator(1 << 20)


class ThresholdMkPhf(MkPhf):
    scheme_id = SCHEME_THRESHOLD

    def __init__(self, n, k, gamma_frac: Fraction, t, variant, global_seed, layer_bins,
                 stream, retrieval, slots: EliasFanoSeq, fallback: Fallback1Phf, attempts=None):
        self.n = n
        self.k = k
        self.gamma_frac = gamma_frac
        self.gamma = float(gamma_frac)
        self.t = t
        self.variant = variant
        self.global_seed = global_seed
        self.layer_bins = np.asarray(layer_bins, dtype=np.int64)
        self.stream = stream
        self.retrieval = retrieval
        self.slots = slots
        self.fallback = fallback
        self.width = t.bit_length() - 1
        self.tv = optimal_thresholds(k, self.gamma, t)
        self.offsets = np.concatenate([[0], np.cumsum(self.layer_bins)]).astype(np.int64)
        nl = len(self.layer_bins)
        self.seeds = np.array([sub_seed(global_seed, TAG_BIN, i) for i in range(nl)], dtype=np.uint64)
        # fingerprint seeds: the bin seeds, except consensus layers which may have been re-seeded
        self.attempts = np.zeros(nl, dtype=np.int64) if attempts is None else \
            np.asarray(attempts, dtype=np.int64)
        if variant == "consensus":
            self.fp_seeds = np.array([sub_seed(global_seed, TAG_FINGERPRINT, i, int(a))
                                      for i, a in enumerate(self.attempts)], dtype=np.uint64)
        else:
            self.fp_seeds = self.seeds
        self.stats: dict = {}

    @property
    def num_layers(self) -> int:
        return len(self.layer_bins)

    @property
    def residual_keys(self) -> int:
        return len(self.slots)

    # ---------------------------------------------------------------- build
    @classmethod
    def build(cls, keys, k: int, gamma: float = 2.0, t: int = 32, variant: str = "plain",
              global_seed: int = 0, max_layers: int = MAX_LAYERS,
              step_budget: int = STEP_BUDGET) -> "ThresholdMkPhf":
        if variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}")
        if k < 1 or t < 2 or t & (t - 1):
            raise ValueError("need k >= 1 and t a power of two >= 2")
        if not 1 <= max_layers <= MAX_LAYERS:
            raise ValueError(f"max_layers must be in [1, {MAX_LAYERS}]")
        gfrac = _gamma_fraction(gamma)
        if gfrac <= 1:
            raise ValueError("gamma must exceed 1")
        hi, lo = as_hashes(keys, global_seed)
        n = hi.shape[0]
        if n == 0:
            raise ValueError("need at least one key")
        g = float(gfrac)
        tv = optimal_thresholds(k, g, t)
        T = tv.T
        w = t.bit_length() - 1
        M = -(-n // k)
        last_cap = last_capacity(n, k)
        stream = np.zeros((M * w + 63) // 64 + 1, dtype=np.uint64)
        deficit = np.zeros(M, dtype=np.int64)
        layer_bins = []
        ret_hi, ret_lo, ret_val = [], [], []
        rest = np.arange(n)
        cum = 0
        steps_total = 0
        attempts = []
        while cum < M:
            layer = len(layer_bins)
            if layer >= max_layers:
                raise ThresholdBuildError(f"{M - cum} bins left after {max_layers} layers")
            r_hi, r_lo = hi[rest], lo[rest]
            nr = rest.shape[0]
            if layer == max_layers - 1:
                nbins = M - cum
            else:
                nbins = min(-(-nr * gfrac.denominator // (k * gfrac.numerator)), M - cum)
            nbins = max(int(nbins), 1)
            seed = sub_seed(global_seed, TAG_BIN, layer)
            caps = np.full(nbins, k, dtype=np.int64)
            if cum + nbins == M:
                caps[-1] = last_cap
            bins = range_many(r_hi, r_lo, TAG_BIN, seed, nbins)
            counts = np.bincount(bins, minlength=nbins)
            starts = np.concatenate([[0], np.cumsum(counts)]).astype(np.int64)
            if variant == "consensus":
                order = np.argsort(bins, kind="stable")
                s_hi, s_lo = r_hi[order], r_lo[order]
                limits = np.array([consensus_accept_limit(c, k, tv, cp) for c, cp in zip(counts, caps)],
                                  dtype=np.int64)
                for attempt in range(LAYER_ATTEMPTS):
                    fseed = sub_seed(global_seed, TAG_FINGERPRINT, layer, attempt)
                    steps = _consensus_layer(s_hi, s_lo, starts, caps, limits, cum, U64(fseed), T, t,
                                             w, stream, step_budget * nbins)
                    steps_total += steps if steps > 0 else 0
                    if steps > 0:
                        break
                else:
                    raise ThresholdBuildError(
                        f"consensus search failed in layer {layer} ({nbins} bins, {nr} keys) "
                        f"after {LAYER_ATTEMPTS} re-seeds: "
                        + ("step budget exhausted" if steps == -1 else "no assignment exists"))
                attempts.append(attempt)
                seed_fp = fseed
                keep = _consensus_kept(s_hi, s_lo, starts, cum, U64(seed_fp), T, w, stream)
                sb = np.repeat(np.arange(nbins), counts)
            else:
                fp = unit_many(r_hi, r_lo, TAG_FINGERPRINT, seed)
                order = np.lexsort((fp, bins))
                sf = fp[order]
                sb = bins[order]
                over = counts > caps
                x = np.full(nbins, np.inf)
                x[over] = sf[starts[:-1][over] + caps[over]]
                idx = np.searchsorted(T, x, side="left") - 1
                keep = sf <= T[idx][sb]
                if variant == "packed":
                    kept_n = np.bincount(sb[keep], minlength=nbins)
                    upper = T[np.minimum(idx + 1, t - 1)]
                    window = (~keep) & (idx[sb] < t - 1) & (sf <= upper[sb])
                    rank = np.arange(nr) - starts[sb] - kept_n[sb]
                    take = window & (rank < (caps - kept_n)[sb])
                    wk = order[window]
                    bh, bl = bit_keys(r_hi[wk], r_lo[wk], layer)
                    ret_hi.append(bh)
                    ret_lo.append(bl)
                    ret_val.append(take[window].astype(np.uint64))
                    keep = keep | take
                write_packed_idx(stream, cum, w, idx)
            kept_n = np.bincount(sb[keep], minlength=nbins)
            deficit[cum:cum + nbins] = caps - kept_n
            rest = rest[order[~keep]]
            layer_bins.append(nbins)
            cum += nbins
        retrieval = None
        if variant == "packed":
            rh = np.concatenate(ret_hi) if ret_hi else np.zeros(0, dtype=np.uint64)
            rl = np.concatenate(ret_lo) if ret_lo else np.zeros(0, dtype=np.uint64)
            rv = np.concatenate(ret_val) if ret_val else np.zeros(0, dtype=np.uint64)
            retrieval = RetrievalFn.build(rh, rl, rv, 1, sub_seed(global_seed, TAG_BITKEY_HI))
        if int(deficit.sum()) != rest.shape[0]:
            raise AssertionError("slot accounting mismatch")
        slots = EliasFanoSeq.encode(np.repeat(np.arange(M), deficit))
        fallback = Fallback1Phf.build(hi[rest], lo[rest], sub_seed(global_seed, 0xFA11))
        phf = cls(n, k, gfrac, t, variant, global_seed, layer_bins, stream, retrieval, slots, fallback,
                  attempts)
        phf.stats = {"layers": len(layer_bins), "residual": int(rest.shape[0]),
                     "retrieval_entries": 0 if retrieval is None else retrieval.n,
                     "search_steps": steps_total}
        return phf

    # ---------------------------------------------------------------- query
    def _nb_args(self):
        ret = self.retrieval if self.retrieval is not None else _EMPTY_RET
        return (VARIANTS.index(self.variant), self.offsets, self.seeds, self.fp_seeds, self.stream,
                self.width,
                self.tv.T, self.t, ret.nb, self.slots.nb, self.fallback.nb)

    def query_many(self, hi, lo) -> np.ndarray:
        return _query_many(np.ascontiguousarray(hi, dtype=np.uint64),
                           np.ascontiguousarray(lo, dtype=np.uint64), *self._nb_args())

    # -------------------------------------------------------------- storage
    def _write(self, w: Writer) -> None:
        for x in (self.n, self.k, self.gamma_frac.numerator, self.gamma_frac.denominator,
                  self.t, VARIANTS.index(self.variant), self.global_seed):
            w.u64(x)
        w.words(self.layer_bins.astype(np.uint64))
        if self.variant == "consensus":
            w.words(self.attempts.astype(np.uint64))
        write_packed(w, self.stream, self.num_bins * self.width)
        if self.retrieval is not None:
            self.retrieval.write(w)
        self.slots.write(w)
        self.fallback.write(w)

    @classmethod
    def _read(cls, rd: Reader) -> "ThresholdMkPhf":
        n, k, num, den, t, v, gseed = (rd.u64() for _ in range(7))
        if k < 1 or den == 0 or v >= len(VARIANTS) or t < 2 or t & (t - 1):
            raise FormatError("bad threshold header")
        layer_bins = rd.words().astype(np.int64)
        attempts = rd.words().astype(np.int64) if VARIANTS[v] == "consensus" else None
        if attempts is not None and attempts.shape != layer_bins.shape:
            raise FormatError("bad consensus attempt table")
        M = -(-n // k)
        if int(layer_bins.sum()) != M:
            raise FormatError("layer sizes do not cover the bin range")
        stream = read_packed(rd, M * (t.bit_length() - 1))
        retrieval = RetrievalFn.read(rd) if VARIANTS[v] == "packed" else None
        slots = EliasFanoSeq.read(rd)
        fallback = Fallback1Phf.read(rd)
        return cls(n, k, Fraction(num, den), t, VARIANTS[v], gseed, layer_bins, stream,
                   retrieval, slots, fallback, attempts)


def write_packed_idx(stream: np.ndarray, first_bin: int, w: int, idx: np.ndarray) -> None:
    _write_fixed_at(stream, first_bin * w, w, np.ascontiguousarray(idx, dtype=np.uint64))


@nb.njit(cache=True)
def _write_fixed_at(words, pos, width, values):
    for i in range(values.shape[0]):
        write_bits(words, pos + i * width, width, values[i])


_EMPTY_RET = RetrievalFn(1, 0, 0, np.zeros(0, dtype=np.uint64), np.zeros(1, dtype=np.int64),
                         np.zeros((1, 1), dtype=np.uint64))
