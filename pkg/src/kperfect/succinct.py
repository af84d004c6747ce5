"""Bit vectors with rank/select, Elias-Fano and Golomb-Rice sequences.

The structures keep their payload in plain uint64 word arrays (one zero
padding word at the end so unaligned 64-bit reads never run off the array).
Hot paths are numba functions that take the raw arrays, bundled in tuples,
so the hash function queries can call them from compiled code:

    bitvec tuple:  (words, rank_blocks, select1_samples, select0_samples, length)
    ef tuple:      (lower_words, L, n, upper bitvec tuple, upper_count)
"""
from __future__ import annotations

import numba as nb
import numpy as np

from .serial import FormatError, Reader, Writer

U64 = np.uint64
ONES = np.uint64(0xFFFFFFFFFFFFFFFF)
BLOCK_WORDS = 8  # rank directory: one cumulative count per 512 bits
SELECT_SAMPLE = 8192  # one select sample per 8192 ones (or zeros)
_SAMPLE_SHIFT = 13


# --------------------------------------------------------------------------
# word-level primitives

@nb.njit(inline="always")
def popcount(x):
    x = np.uint64(x)
    x = x - ((x >> U64(1)) & U64(0x5555555555555555))
    x = (x & U64(0x3333333333333333)) + ((x >> U64(2)) & U64(0x3333333333333333))
    x = (x + (x >> U64(4))) & U64(0x0F0F0F0F0F0F0F0F)
    return np.int64((x * U64(0x0101010101010101)) >> U64(56))


@nb.njit(inline="always")
def ctz(x):
    x = np.uint64(x)
    return popcount((x & (~x + U64(1))) - U64(1))


@nb.njit(inline="always")
def parity(x):
    return popcount(x) & 1


@nb.njit(inline="always")
def select_in_word(w, r):
    """Position of the r-th (0-based) set bit of ``w``."""
    w = np.uint64(w)
    base = 0
    for _ in range(8):
        c = popcount(w & U64(0xFF))
        if r < c:
            break
        r -= c
        w >>= U64(8)
        base += 8
    for _ in range(r):
        w &= w - U64(1)
    return base + ctz(w)


@nb.njit(inline="always")
def low_mask(width):
    if width >= 64:
        return ONES
    return (U64(1) << U64(width)) - U64(1)


@nb.njit(inline="always")
def read_bits(words, pos, width):
    if width == 0:
        return U64(0)
    wi = pos >> 6
    off = pos & 63
    v = words[wi] >> U64(off)
    if off + width > 64:
        v |= words[wi + 1] << U64(64 - off)
    return v & low_mask(width)


@nb.njit(inline="always")
def write_bits(words, pos, width, value):
    """OR ``value`` into a zero-initialized word array at bit ``pos``."""
    if width == 0:
        return
    value = np.uint64(value) & low_mask(width)
    wi = pos >> 6
    off = pos & 63
    words[wi] |= value << U64(off)
    if off + width > 64:
        words[wi + 1] |= value >> U64(64 - off)


@nb.njit(inline="always")
def set_bits(words, pos, width, value):
    """Overwrite ``width`` bits at ``pos`` with ``value``."""
    if width == 0:
        return
    mask = low_mask(width)
    value = np.uint64(value) & mask
    wi = pos >> 6
    off = pos & 63
    words[wi] = (words[wi] & ~(mask << U64(off))) | (value << U64(off))
    if off + width > 64:
        sh = U64(64 - off)
        words[wi + 1] = (words[wi + 1] & ~(mask >> sh)) | (value >> sh)


@nb.njit(inline="always")
def get_bit(words, pos):
    return np.int64((words[pos >> 6] >> U64(pos & 63)) & U64(1))


def words_for(nbits: int) -> int:
    """Word count including the trailing padding word."""
    return (nbits + 63) // 64 + 1


@nb.njit(cache=True)
def _pack_fixed(values, width):
    words = np.zeros((values.shape[0] * width + 63) // 64 + 1, dtype=np.uint64)
    for i in range(values.shape[0]):
        write_bits(words, i * width, width, values[i])
    return words


@nb.njit(cache=True)
def _unpack_fixed(words, count, width):
    out = np.empty(count, dtype=np.uint64)
    for i in range(count):
        out[i] = read_bits(words, i * width, width)
    return out


def pack_fixed(values, width: int) -> np.ndarray:
    return _pack_fixed(np.ascontiguousarray(values, dtype=np.uint64), int(width))


def unpack_fixed(words: np.ndarray, count: int, width: int) -> np.ndarray:
    return _unpack_fixed(words, int(count), int(width))


def write_packed(w: Writer, words: np.ndarray, nbits: int) -> None:
    """Write only the words that carry payload (no padding)."""
    w.words(words[:(nbits + 63) // 64])


def read_packed(r: Reader, nbits: int) -> np.ndarray:
    words = r.words()
    if words.shape[0] != (nbits + 63) // 64:
        raise FormatError("packed array length mismatch")
    return np.concatenate([words, np.zeros(1, dtype=np.uint64)])


# --------------------------------------------------------------------------
# rank / select

@nb.njit(cache=True)
def _build_directories(words, length):
    nwords = (length + 63) // 64
    nblocks = (nwords + BLOCK_WORDS - 1) // BLOCK_WORDS
    rank = np.zeros(nblocks + 1, dtype=np.uint64)
    acc = 0
    for b in range(nblocks):
        rank[b] = acc
        for w in range(b * BLOCK_WORDS, min(nwords, (b + 1) * BLOCK_WORDS)):
            acc += popcount(words[w])
    rank[nblocks] = acc
    ones = acc
    zeros = length - ones
    s1 = np.zeros(ones // SELECT_SAMPLE + 2, dtype=np.int64)
    s0 = np.zeros(zeros // SELECT_SAMPLE + 2, dtype=np.int64)
    n1 = 0
    n0 = 0
    for b in range(nblocks):
        c1 = np.int64(rank[b + 1]) - np.int64(rank[b])
        bits = min(length, (b + 1) * BLOCK_WORDS * 64) - b * BLOCK_WORDS * 64
        c0 = bits - c1
        # every sample index whose target falls in this block
        while n1 * SELECT_SAMPLE < np.int64(rank[b]) + c1:
            s1[n1] = b
            n1 += 1
        zeros_before = b * BLOCK_WORDS * 64 - np.int64(rank[b])
        while n0 * SELECT_SAMPLE < zeros_before + c0:
            s0[n0] = b
            n0 += 1
    s1[n1:] = nblocks
    s0[n0:] = nblocks
    return rank, s1, s0


@nb.njit(inline="always")
def bv_rank1(bv, pos):
    words, rank, _s1, _s0, _length = bv
    b = pos >> 9
    r = np.int64(rank[b])
    wi = pos >> 6
    for w in range(b * BLOCK_WORDS, wi):
        r += popcount(words[w])
    off = pos & 63
    if off:
        r += popcount(words[wi] & low_mask(off))
    return r


@nb.njit(inline="always")
def bv_select1(bv, r):
    words, rank, s1, _s0, length = bv
    s = r >> _SAMPLE_SHIFT
    lo = s1[s]
    hi = s1[s + 1]
    nblocks = rank.shape[0] - 1
    if hi > nblocks - 1:
        hi = nblocks - 1
    # largest block with rank[block] <= r
    while lo < hi:
        mid = (lo + hi + 1) >> 1
        if np.int64(rank[mid]) <= r:
            lo = mid
        else:
            hi = mid - 1
    rr = r - np.int64(rank[lo])
    w = lo * BLOCK_WORDS
    while True:
        c = popcount(words[w])
        if rr < c:
            return w * 64 + select_in_word(words[w], rr)
        rr -= c
        w += 1


@nb.njit(inline="always")
def bv_select0(bv, r):
    words, rank, _s1, s0, length = bv
    s = r >> _SAMPLE_SHIFT
    lo = s0[s]
    hi = s0[s + 1]
    nblocks = rank.shape[0] - 1
    if hi > nblocks - 1:
        hi = nblocks - 1
    while lo < hi:
        mid = (lo + hi + 1) >> 1
        if mid * BLOCK_WORDS * 64 - np.int64(rank[mid]) <= r:
            lo = mid
        else:
            hi = mid - 1
    rr = r - (lo * BLOCK_WORDS * 64 - np.int64(rank[lo]))
    w = lo * BLOCK_WORDS
    while True:
        inv = ~words[w]
        c = popcount(inv)
        if rr < c:
            return w * 64 + select_in_word(inv, rr)
        rr -= c
        w += 1


class BitVec:
    """Plain bit vector with rank1 / select1 / select0 support."""

    def __init__(self, words: np.ndarray, length: int):
        self.length = int(length)
        need = words_for(self.length)
        if words.shape[0] < need:
            words = np.concatenate([words, np.zeros(need - words.shape[0], dtype=np.uint64)])
        self.words = np.array(words[:need], dtype=np.uint64)
        # bits beyond length must be zero for the directories to be exact
        tail = self.length & 63
        if tail:
            self.words[self.length >> 6] &= np.uint64((1 << tail) - 1)
        self.words[(self.length + 63) // 64:] = 0
        self.rank_blocks, self.s1, self.s0 = _build_directories(self.words, self.length)
        self.ones = int(self.rank_blocks[-1])

    @classmethod
    def from_bits(cls, bits) -> "BitVec":
        bits = np.asarray(bits, dtype=np.uint8)
        packed = np.packbits(bits, bitorder="little")
        packed = np.concatenate([packed, np.zeros((-len(packed)) % 8, dtype=np.uint8)])
        return cls(packed.view("<u8").astype(np.uint64), len(bits))

    @property
    def nb(self):
        return (self.words, self.rank_blocks, self.s1, self.s0, self.length)

    def __len__(self) -> int:
        return self.length

    def __getitem__(self, pos: int) -> int:
        if not 0 <= pos < self.length:
            raise IndexError(pos)
        return (int(self.words[pos >> 6]) >> (pos & 63)) & 1

    def rank1(self, pos: int) -> int:
        if not 0 <= pos <= self.length:
            raise IndexError(f"rank position {pos} outside [0, {self.length}]")
        return int(_rank1(self.nb, pos))

    def select1(self, r: int) -> int:
        if not 0 <= r < self.ones:
            raise IndexError(f"select1({r}) with only {self.ones} ones")
        return int(_select1(self.nb, r))

    def select0(self, r: int) -> int:
        if not 0 <= r < self.length - self.ones:
            raise IndexError(f"select0({r}) with only {self.length - self.ones} zeros")
        return int(_select0(self.nb, r))

    @property
    def payload_bits(self) -> int:
        return self.length

    @property
    def directory_bits(self) -> int:
        return 64 * (self.rank_blocks.shape[0] + self.s1.shape[0] + self.s0.shape[0])

    def write(self, w: Writer) -> None:
        w.u64(self.length)
        write_packed(w, self.words, self.length)

    @classmethod
    def read(cls, r: Reader) -> "BitVec":
        length = r.u64()
        return cls(read_packed(r, length), length)


@nb.njit(cache=True)
def _rank1(bv, pos):
    return bv_rank1(bv, pos)


@nb.njit(cache=True)
def _select1(bv, r):
    return bv_select1(bv, r)


@nb.njit(cache=True)
def _select0(bv, r):
    return bv_select0(bv, r)


# --------------------------------------------------------------------------
# Elias-Fano

def ef_lower_width(n: int, last: int) -> int:
    """Smallest L with n * 2**L >= last, i.e. ceil(log2(last / n)); 0 if last <= n."""
    if n == 0 or last <= n:
        return 0
    L = 0
    while n << L < last and L < 63:
        L += 1
    return L


@nb.njit(cache=True)
def _ef_build(values, L):
    n = values.shape[0]
    lower = np.zeros((n * L + 63) // 64 + 1, dtype=np.uint64)
    last_high = 0 if n == 0 else np.int64(values[n - 1] >> U64(L))
    ulen = n + last_high + 1
    upper = np.zeros((ulen + 63) // 64 + 1, dtype=np.uint64)
    for i in range(n):
        v = values[i]
        write_bits(lower, i * L, L, v)
        pos = np.int64(v >> U64(L)) + i
        upper[pos >> 6] |= U64(1) << U64(pos & 63)
    return lower, upper, ulen


@nb.njit(inline="always")
def ef_get(ef, i):
    lower, L, n, upper, _ = ef
    high = bv_select1(upper, i) - i
    return (U64(high) << U64(L)) | read_bits(lower, i * L, L)


@nb.njit(inline="always")
def ef_pred_index(ef, x):
    """Largest i with a_i <= x, or -1 if x < a_0."""
    lower, L, n, upper, high_count = ef
    x = np.uint64(x)
    hx = np.int64(x >> U64(L))
    if hx >= high_count:
        return n - 1
    xl = x & low_mask(L)
    c_le = bv_select0(upper, hx) - hx
    if hx > 0:
        c_lt = bv_select0(upper, hx - 1) - (hx - 1)
    else:
        c_lt = 0
    i = c_le - 1
    while i >= c_lt:
        if read_bits(lower, i * L, L) <= xl:
            return i
        i -= 1
    return c_lt - 1


@nb.njit(cache=True)
def _ef_access_many(ef, idx):
    out = np.empty(idx.shape[0], dtype=np.uint64)
    for j in range(idx.shape[0]):
        out[j] = ef_get(ef, idx[j])
    return out


@nb.njit(cache=True)
def _ef_pred_many(ef, xs):
    out = np.empty(xs.shape[0], dtype=np.int64)
    for j in range(xs.shape[0]):
        out[j] = ef_pred_index(ef, xs[j])
    return out


class EliasFanoSeq:
    """Monotone integer sequence with O(1) access and fast predecessor."""

    def __init__(self, n: int, L: int, lower: np.ndarray, upper: BitVec):
        self.n = n
        self.L = L
        self.lower = lower
        self.upper = upper
        # number of distinct high parts representable = zeros in upper
        self.high_count = upper.length - n

    @classmethod
    def encode(cls, values) -> "EliasFanoSeq":
        vals = np.ascontiguousarray(values, dtype=np.uint64)
        if vals.ndim != 1:
            raise ValueError("values must be one-dimensional")
        if vals.shape[0] > 1 and np.any(vals[1:] < vals[:-1]):
            raise ValueError("Elias-Fano input must be non-decreasing")
        n = vals.shape[0]
        L = ef_lower_width(n, int(vals[-1]) if n else 0)
        lower, upper, ulen = _ef_build(vals, L)
        return cls(n, L, lower, BitVec(upper, ulen))

    @property
    def nb(self):
        return (self.lower, self.L, self.n, self.upper.nb, self.high_count)

    def __len__(self) -> int:
        return self.n

    def __getitem__(self, i: int) -> int:
        if not 0 <= i < self.n:
            raise IndexError(i)
        return int(_ef_access_many(self.nb, np.array([i], dtype=np.int64))[0])

    def to_array(self) -> np.ndarray:
        return _ef_access_many(self.nb, np.arange(self.n, dtype=np.int64))

    def predecessor(self, x: int) -> tuple[int, int | None]:
        """``(i, a_i)`` for the largest ``a_i <= x``; ``(-1, None)`` before the first."""
        if self.n == 0:
            raise ValueError("predecessor on an empty sequence")
        i = int(_ef_pred_many(self.nb, np.array([x], dtype=np.uint64))[0])
        return (i, self[i]) if i >= 0 else (-1, None)

    def successor_index(self, x: int) -> int:
        """First index j with a_j > x (``n`` if none)."""
        return self.predecessor(x)[0] + 1

    def predecessor_many(self, xs) -> np.ndarray:
        return _ef_pred_many(self.nb, np.ascontiguousarray(xs, dtype=np.uint64))

    @property
    def payload_bits(self) -> int:
        return self.n * self.L + self.upper.length

    def write(self, w: Writer) -> None:
        w.u64(self.n)
        w.u64(self.L)
        write_packed(w, self.lower, self.n * self.L)
        self.upper.write(w)

    @classmethod
    def read(cls, r: Reader) -> "EliasFanoSeq":
        n = r.u64()
        L = r.u64()
        if L > 64:
            raise FormatError("bad Elias-Fano lower width")
        lower = read_packed(r, n * L)
        upper = BitVec.read(r)
        if upper.ones != n:
            raise FormatError("Elias-Fano upper bits do not match n")
        return cls(n, L, lower, upper)

    def to_bytes(self) -> bytes:
        w = Writer()
        self.write(w)
        return w.getvalue()

    @classmethod
    def from_bytes(cls, data: bytes) -> "EliasFanoSeq":
        return cls.read(Reader(data))


# --------------------------------------------------------------------------
# Golomb-Rice

@nb.njit(cache=True)
def _gr_build(values, widths):
    n = values.shape[0]
    lower_bits = 0
    unary_bits = 0
    for j in range(n):
        lower_bits += widths[j]
        unary_bits += np.int64(values[j] >> U64(widths[j])) + 1
    lower = np.zeros((lower_bits + 63) // 64 + 1, dtype=np.uint64)
    unary = np.zeros((unary_bits + 63) // 64 + 1, dtype=np.uint64)
    lp = 0
    up = 0
    for j in range(n):
        write_bits(lower, lp, widths[j], values[j])
        lp += widths[j]
        up += np.int64(values[j] >> U64(widths[j]))
        unary[up >> 6] |= U64(1) << U64(up & 63)
        up += 1
    return lower, lower_bits, unary, unary_bits


@nb.njit(inline="always")
def gr_get(lower, unary, j, lower_pos, width):
    """Entry ``j`` whose low part starts at bit ``lower_pos`` and is ``width`` wide."""
    end = bv_select1(unary, j)
    start = bv_select1(unary, j - 1) + 1 if j > 0 else 0
    return (U64(end - start) << U64(width)) | read_bits(lower, lower_pos, width)


@nb.njit(cache=True)
def _gr_access_many(lower, unary, idx, lower_pos, widths):
    out = np.empty(idx.shape[0], dtype=np.uint64)
    for t in range(idx.shape[0]):
        out[t] = gr_get(lower, unary, idx[t], lower_pos[t], widths[t])
    return out


class GolombRiceSeq:
    """Golomb-Rice coded integers with caller-chosen per-entry widths.

    Low parts are concatenated in ``lower``; high parts are unary codes
    (``h`` zeros then a one) in a select-enabled bit vector.  With a single
    uniform width the low part of entry ``j`` sits at ``j * width``; with
    per-entry widths the caller supplies the widths again after loading.
    """

    def __init__(self, n: int, lower: np.ndarray, lower_bits: int, unary: BitVec,
                 widths):
        self.n = n
        self.lower = lower
        self.lower_bits = lower_bits
        self.unary = unary
        self._set_widths(widths)

    def _set_widths(self, widths) -> None:
        if np.ndim(widths) == 0:
            self.uniform_width = int(widths)
            self.widths = None
            self._offsets = None
        else:
            w = np.ascontiguousarray(widths, dtype=np.int64)
            if w.shape[0] != self.n:
                raise ValueError("one width per entry required")
            self.uniform_width = None
            self.widths = w
            self._offsets = np.concatenate([[0], np.cumsum(w)[:-1]]).astype(np.int64) if self.n else w

    @classmethod
    def encode(cls, values, widths) -> "GolombRiceSeq":
        vals = np.ascontiguousarray(values, dtype=np.uint64)
        n = vals.shape[0]
        if np.ndim(widths) == 0:
            w = np.full(n, int(widths), dtype=np.int64)
        else:
            w = np.ascontiguousarray(widths, dtype=np.int64)
        if w.shape[0] != n or (n and (w.min() < 0 or w.max() > 64)):
            raise ValueError("widths must be in [0, 64], one per value")
        lower, lower_bits, unary, unary_bits = _gr_build(vals, w)
        return cls(n, lower, lower_bits, BitVec(unary, unary_bits), widths)

    def lower_offset(self, j: int) -> int:
        if self.uniform_width is not None:
            return j * self.uniform_width
        return int(self._offsets[j])

    def width(self, j: int) -> int:
        return self.uniform_width if self.uniform_width is not None else int(self.widths[j])

    def __len__(self) -> int:
        return self.n

    def __getitem__(self, j: int) -> int:
        if not 0 <= j < self.n:
            raise IndexError(j)
        return int(self.access_many(np.array([j]))[0])

    def access_many(self, idx) -> np.ndarray:
        idx = np.ascontiguousarray(idx, dtype=np.int64)
        if self.uniform_width is not None:
            pos = idx * self.uniform_width
            wid = np.full(idx.shape[0], self.uniform_width, dtype=np.int64)
        else:
            pos = self._offsets[idx]
            wid = self.widths[idx]
        return _gr_access_many(self.lower, self.unary.nb, idx, pos, wid)

    def to_array(self) -> np.ndarray:
        return self.access_many(np.arange(self.n))

    @property
    def payload_bits(self) -> int:
        return self.lower_bits + self.unary.length

    def write(self, w: Writer) -> None:
        w.u64(self.n)
        w.u64(self.lower_bits)
        w.u64(self.uniform_width if self.uniform_width is not None else 0xFFFF)
        write_packed(w, self.lower, self.lower_bits)
        self.unary.write(w)

    @classmethod
    def read(cls, r: Reader, widths=None) -> "GolombRiceSeq":
        n = r.u64()
        lower_bits = r.u64()
        uw = r.u64()
        lower = read_packed(r, lower_bits)
        unary = BitVec.read(r)
        if unary.ones != n:
            raise FormatError("Golomb-Rice unary part does not match n")
        if uw != 0xFFFF:
            widths = uw
        elif widths is None:
            raise ValueError("per-entry widths must be supplied to load this sequence")
        return cls(n, lower, lower_bits, unary, widths)

    def to_bytes(self) -> bytes:
        w = Writer()
        self.write(w)
        return w.getvalue()

    @classmethod
    def from_bytes(cls, data: bytes, widths=None) -> "GolombRiceSeq":
        return cls.read(Reader(data), widths)
