"""Seedable hashing primitives.

Every key is hashed exactly once into a 128-bit master hash (``Key128``).
All bins, fingerprints and seeded re-hashes used by the constructions are
derived from that value by cheap 64-bit mixing, so seed searches never touch
the original key bytes again.

The master hash is keyed BLAKE2b with a 16 byte digest; the 64-bit global
seed is the BLAKE2b key.  Test vectors live in ``tests/test_hashing.py``.
"""
from __future__ import annotations

import hashlib
from typing import Iterable, NamedTuple

import numba as nb
import numpy as np

MASK64 = (1 << 64) - 1

# purpose tags: one per derived stream
TAG_BIN = 1
TAG_FINGERPRINT = 2
TAG_PLACE = 3
TAG_SPLIT = 4
TAG_PACHASH = 5
TAG_RET_CHUNK = 6
TAG_RET_ROW = 7
TAG_RET_COEF = 8
TAG_FALLBACK = 9
TAG_BUCKET = 10
TAG_RS_BUCKET = 11
TAG_MERGE = 12
TAG_BITKEY_HI = 13
TAG_BITKEY_LO = 14
TAG_SEED = 15

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_LO32 = np.uint64(0xFFFFFFFF)
_TWO_M64 = 5.421010862427522e-20  # 2**-64


class Key128(NamedTuple):
    hi: int
    lo: int


def hash_key(key: bytes, global_seed: int = 0) -> Key128:
    d = hashlib.blake2b(key, digest_size=16,
                        key=(global_seed & MASK64).to_bytes(8, "little")).digest()
    return Key128(int.from_bytes(d[:8], "little"), int.from_bytes(d[8:], "little"))


def hash_keys(keys: Iterable[bytes], global_seed: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """Hash a batch of byte strings into parallel ``(hi, lo)`` uint64 arrays."""
    skey = (global_seed & MASK64).to_bytes(8, "little")
    blake = hashlib.blake2b
    buf = b"".join(blake(k, digest_size=16, key=skey).digest() for k in keys)
    pairs = np.frombuffer(buf, dtype="<u8").reshape(-1, 2)
    return pairs[:, 0].astype(np.uint64), pairs[:, 1].astype(np.uint64)


@nb.njit(inline="always")
def mix64(z):
    z = np.uint64(z)
    z ^= z >> np.uint64(30)
    z *= _M1
    z ^= z >> np.uint64(27)
    z *= _M2
    z ^= z >> np.uint64(31)
    return z


@nb.njit(inline="always")
def seed_word(tag, seed):
    return mix64(np.uint64(seed) + np.uint64(tag + 1) * _GOLDEN)


@nb.njit(inline="always")
def derive_sw(hi, lo, sw):
    """Derived 64-bit value from a precomputed ``seed_word``."""
    return mix64(np.uint64(hi) + mix64(np.uint64(lo) ^ sw))


@nb.njit(inline="always")
def derive(hi, lo, tag, seed):
    return derive_sw(hi, lo, seed_word(tag, seed))


@nb.njit(inline="always")
def mulhi(a, b):
    a = np.uint64(a)
    b = np.uint64(b)
    a_lo = a & _LO32
    a_hi = a >> np.uint64(32)
    b_lo = b & _LO32
    b_hi = b >> np.uint64(32)
    p0 = a_lo * b_lo
    p1 = a_lo * b_hi
    p2 = a_hi * b_lo
    p3 = a_hi * b_hi
    mid = (p0 >> np.uint64(32)) + (p1 & _LO32) + (p2 & _LO32)
    return p3 + (p1 >> np.uint64(32)) + (p2 >> np.uint64(32)) + (mid >> np.uint64(32))


@nb.njit(inline="always")
def fastrange(v, m):
    return np.int64(mulhi(v, np.uint64(m)))


@nb.njit(inline="always")
def unit(v):
    # (v + 1) / 2**64 without wrapping at v = 2**64 - 1
    return (np.float64(v) + 1.0) * _TWO_M64


@nb.njit(inline="always")
def to_range_nb(hi, lo, tag, seed, m):
    return fastrange(derive(hi, lo, tag, seed), m)


@nb.njit(inline="always")
def to_unit_nb(hi, lo, tag, seed):
    return unit(derive(hi, lo, tag, seed))


@nb.njit(cache=True)
def _derive_many(hi, lo, tag, seed):
    out = np.empty(hi.shape[0], dtype=np.uint64)
    sw = seed_word(tag, seed)
    for i in range(hi.shape[0]):
        out[i] = derive_sw(hi[i], lo[i], sw)
    return out


@nb.njit(cache=True)
def _range_many(hi, lo, tag, seed, m):
    out = np.empty(hi.shape[0], dtype=np.int64)
    sw = seed_word(tag, seed)
    for i in range(hi.shape[0]):
        out[i] = fastrange(derive_sw(hi[i], lo[i], sw), m)
    return out


@nb.njit(cache=True)
def _unit_many(hi, lo, tag, seed):
    out = np.empty(hi.shape[0], dtype=np.float64)
    sw = seed_word(tag, seed)
    for i in range(hi.shape[0]):
        out[i] = unit(derive_sw(hi[i], lo[i], sw))
    return out


def _u64(x) -> np.ndarray:
    return np.ascontiguousarray(np.atleast_1d(np.asarray(x, dtype=np.uint64)))


def derived(h: Key128, purpose_tag: int, seed: int) -> int:
    """The raw derived 64-bit value behind ``to_range`` and ``to_unit``."""
    return int(_derive_many(_u64(h.hi), _u64(h.lo), purpose_tag, np.uint64(seed & MASK64))[0])


def to_range(h: Key128, purpose_tag: int, seed: int, m: int) -> int:
    if m < 1:
        raise ValueError("m must be positive")
    return (derived(h, purpose_tag, seed) * m) >> 64


def to_unit(h: Key128, purpose_tag: int, seed: int) -> float:
    return float(_unit_many(_u64(h.hi), _u64(h.lo), purpose_tag, np.uint64(seed & MASK64))[0])


def derive_many(hi, lo, purpose_tag: int, seed: int) -> np.ndarray:
    return _derive_many(_u64(hi), _u64(lo), purpose_tag, np.uint64(seed & MASK64))


def range_many(hi, lo, purpose_tag: int, seed: int, m: int) -> np.ndarray:
    if m < 1:
        raise ValueError("m must be positive")
    return _range_many(_u64(hi), _u64(lo), purpose_tag, np.uint64(seed & MASK64), m)


def unit_many(hi, lo, purpose_tag: int, seed: int) -> np.ndarray:
    return _unit_many(_u64(hi), _u64(lo), purpose_tag, np.uint64(seed & MASK64))


def sub_seed(global_seed: int, *parts: int) -> int:
    """Deterministic 64-bit seed for a sub-structure (layer, chunk, ...)."""
    s = global_seed & MASK64
    for p in parts:
        s = derived(Key128(s, p & MASK64), TAG_SEED, 0)
    return s
