"""Little-endian 64-bit word container used by every serialized structure.

A file is ``MAGIC`` (8 bytes), a format version word, a scheme id word and
then a flat sequence of u64 words.  Variable-length arrays are prefixed with
their word count.  Rank/select directories are never written; they are
rebuilt on load.
"""
from __future__ import annotations

import struct

import numpy as np

MAGIC = b"KPHF\x00\x01\r\n"
VERSION = 1


class FormatError(ValueError):
    pass


class Writer:
    def __init__(self):
        self._parts: list[bytes] = []

    def u64(self, x: int) -> None:
        self._parts.append(struct.pack("<Q", int(x) & 0xFFFFFFFFFFFFFFFF))

    def f64(self, x: float) -> None:
        self._parts.append(struct.pack("<d", float(x)))

    def words(self, arr) -> None:
        a = np.ascontiguousarray(arr, dtype="<u8")
        self.u64(a.shape[0])
        self._parts.append(a.tobytes())

    def raw(self, data: bytes) -> None:
        if len(data) % 8:
            raise ValueError("raw sections must be word aligned")
        self._parts.append(data)

    def getvalue(self) -> bytes:
        return b"".join(self._parts)


class Reader:
    def __init__(self, data: bytes, pos: int = 0):
        self._data = memoryview(data)
        self.pos = pos

    def _take(self, nbytes: int) -> memoryview:
        end = self.pos + nbytes
        if end > len(self._data):
            raise FormatError("truncated input")
        view = self._data[self.pos:end]
        self.pos = end
        return view

    def u64(self) -> int:
        return struct.unpack("<Q", self._take(8))[0]

    def f64(self) -> float:
        return struct.unpack("<d", self._take(8))[0]

    def words(self) -> np.ndarray:
        count = self.u64()
        if count > (len(self._data) - self.pos) // 8:
            raise FormatError("truncated input")
        return np.frombuffer(self._take(8 * count), dtype="<u8").astype(np.uint64)

    def at_end(self) -> bool:
        return self.pos == len(self._data)


def write_header(w: Writer, scheme_id: int) -> None:
    w.raw(MAGIC)
    w.u64(VERSION)
    w.u64(scheme_id)


def read_header(data: bytes) -> tuple[int, Reader]:
    if len(data) < 24 or bytes(data[:8]) != MAGIC:
        raise FormatError("bad magic")
    r = Reader(data, 8)
    version = r.u64()
    if version != VERSION:
        raise FormatError(f"unsupported version {version}")
    return r.u64(), r
