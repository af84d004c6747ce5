"""Interface shared by all minimal k-perfect hash functions."""
from __future__ import annotations

from typing import Sequence

import numpy as np

from .hashing import hash_key, hash_keys
from .serial import FormatError, Reader, Writer, read_header, write_header

SCHEME_THRESHOLD = 1
SCHEME_BUCKET = 2
SCHEME_RECSPLIT = 3
SCHEME_PACHASH = 4


def as_hashes(keys, global_seed: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """Accept byte strings or a ready ``(hi, lo)`` pair; reject duplicates."""
    if isinstance(keys, tuple) and len(keys) == 2 and isinstance(keys[0], np.ndarray):
        hi = np.ascontiguousarray(keys[0], dtype=np.uint64)
        lo = np.ascontiguousarray(keys[1], dtype=np.uint64)
    else:
        hi, lo = hash_keys(keys, global_seed)
    if hi.shape[0] > 1:
        order = np.lexsort((lo, hi))
        h, l = hi[order], lo[order]
        if np.any((h[1:] == h[:-1]) & (l[1:] == l[:-1])):
            raise ValueError("duplicate keys (equal 128-bit hashes)")
    return hi, lo


def last_capacity(n: int, k: int) -> int:
    return n - (-(-n // k) - 1) * k if n else 0


class MkPhf:
    """Maps each of the n construction keys to a bin in [0, ceil(n/k)).

    Every bin receives exactly k keys, except the last one which receives
    n - (ceil(n/k) - 1) * k.  Other keys map to some valid bin.
    """

    scheme_id = 0
    n: int
    k: int
    global_seed: int

    @property
    def num_bins(self) -> int:
        return -(-self.n // self.k)

    def query_many(self, hi: np.ndarray, lo: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def query(self, key: bytes) -> int:
        h = hash_key(key, self.global_seed)
        return int(self.query_many(np.array([h.hi], dtype=np.uint64),
                                   np.array([h.lo], dtype=np.uint64))[0])

    def query_keys(self, keys: Sequence[bytes]) -> np.ndarray:
        hi, lo = hash_keys(keys, self.global_seed)
        return self.query_many(hi, lo)

    def _write(self, w: Writer) -> None:
        raise NotImplementedError

    @classmethod
    def _read(cls, rd: Reader) -> "MkPhf":
        raise NotImplementedError

    def to_bytes(self) -> bytes:
        w = Writer()
        write_header(w, self.scheme_id)
        self._write(w)
        return w.getvalue()

    @classmethod
    def from_bytes(cls, data: bytes) -> "MkPhf":
        sid, rd = read_header(data)
        if sid != cls.scheme_id:
            raise FormatError(f"scheme id {sid} does not match {cls.__name__}")
        obj = cls._read(rd)
        if not rd.at_end():
            raise FormatError("trailing bytes after structure")
        return obj

    def size_bits(self) -> int:
        return 8 * len(self.to_bytes())

    def bits_per_key(self) -> float:
        return self.size_bits() / self.n if self.n else 0.0
