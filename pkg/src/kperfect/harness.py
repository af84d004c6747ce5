"""Key generation, verification, benchmarking and persistence for all schemes."""
from __future__ import annotations

import csv
import io
import math
import statistics
import struct
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .base import MkPhf, as_hashes, last_capacity
from .hashing import hash_keys
from .kphf_bucket import BucketMkPhf
from .kphf_pachash import PaCHashMkPhf
from .kphf_recsplit import RecSplitMkPhf
from .kphf_threshold import ThresholdMkPhf
from .serial import FormatError, read_header

SCHEMES = {
    "threshold": ThresholdMkPhf,
    "bucket": BucketMkPhf,
    "recsplit": RecSplitMkPhf,
    "pachash": PaCHashMkPhf,
}
_BY_ID = {cls.scheme_id: cls for cls in SCHEMES.values()}
_NAME_OF = {cls: name for name, cls in SCHEMES.items()}

# config keys per scheme and how to parse them
CONFIG_KEYS = {
    "threshold": {"gamma": float, "t": int, "variant": str, "max_layers": int},
    "bucket": {"lam": float, "mode": str},
    "recsplit": {"b": int, "ell": int},
    "pachash": {"a": float},
}

CSV_COLUMNS = ["scheme", "config", "n", "k", "bits_per_key", "overhead_pct",
               "construct_ns_per_key", "query_ns_per_query"]

KEYFILE_MAGIC = b"KPKEYS01"


def lower_bound_bits_per_key(k: int) -> float:
    """log2(e) - log2(k^k / k!) / k, the space lower bound of a minimal kPHF."""
    if k < 1:
        raise ValueError("k must be positive")
    return (1.0 - (k * math.log(k) - math.lgamma(k + 1)) / k) / math.log(2)


# --------------------------------------------------------------------------
# keys

def gen_keys(n: int, min_len: int = 10, max_len: int = 50, seed: int = 0) -> list[bytes]:
    """n distinct random byte strings with lengths uniform in [min_len, max_len]."""
    if n < 1:
        raise ValueError("n must be positive")
    if not 1 <= min_len <= max_len <= 255:
        raise ValueError("need 1 <= min_len <= max_len <= 255")
    if sum(256 ** L for L in range(min_len, max_len + 1)) < n:
        raise ValueError(f"only {sum(256 ** L for L in range(min_len, max_len + 1))} distinct "
                         f"strings of length {min_len}..{max_len}")
    rng = np.random.default_rng(seed)
    out: list[bytes] = []
    seen: set[bytes] = set()
    while len(out) < n:
        need = n - len(out)
        lens = rng.integers(min_len, max_len + 1, need)
        blob = rng.bytes(int(lens.sum()))
        pos = 0
        for L in lens.tolist():
            s = blob[pos:pos + L]
            pos += L
            if s not in seen:
                seen.add(s)
                out.append(s)
    return out


def write_keys(path, keys) -> None:
    with open(path, "wb") as f:
        f.write(KEYFILE_MAGIC + struct.pack("<Q", len(keys)))
        buf = io.BytesIO()
        for s in keys:
            buf.write(bytes([len(s)]))
            buf.write(s)
        f.write(buf.getvalue())


def read_keys(path) -> list[bytes]:
    data = Path(path).read_bytes()
    if data[:8] != KEYFILE_MAGIC:
        raise FormatError("not a key file")
    (n,) = struct.unpack_from("<Q", data, 8)
    pos, out = 16, []
    for _ in range(n):
        if pos >= len(data):
            raise FormatError("truncated key file")
        L = data[pos]
        s = data[pos + 1:pos + 1 + L]
        if len(s) != L:
            raise FormatError("truncated key file")
        out.append(s)
        pos += 1 + L
    if pos != len(data):
        raise FormatError("trailing bytes in key file")
    return out


def random_hashes(n: int, seed: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """n random 128-bit key hashes (stand-ins for hashed keys in large experiments)."""
    rng = np.random.default_rng(seed)
    return (rng.integers(0, 2 ** 64, n, dtype=np.uint64, endpoint=False),
            rng.integers(0, 2 ** 64, n, dtype=np.uint64, endpoint=False))


# --------------------------------------------------------------------------
# building and verifying

def parse_config(scheme: str, text: str | None) -> dict:
    """``"gamma=2,t=32"`` -> {"gamma": 2.0, "t": 32}; keys checked against the scheme."""
    if scheme not in SCHEMES:
        raise ValueError(f"unknown scheme {scheme!r}; choose from {sorted(SCHEMES)}")
    out = {}
    for part in filter(None, (text or "").split(",")):
        key, _, val = part.partition("=")
        key = key.strip()
        if key not in CONFIG_KEYS[scheme]:
            raise ValueError(f"{scheme} has no option {key!r}; known: {sorted(CONFIG_KEYS[scheme])}")
        out[key] = CONFIG_KEYS[scheme][key](val.strip())
    return out


def config_string(config: dict) -> str:
    return ",".join(f"{k}={config[k]}" for k in sorted(config))


def build(scheme: str, keys, k: int, config: dict | None = None, global_seed: int = 0) -> MkPhf:
    if scheme not in SCHEMES:
        raise ValueError(f"unknown scheme {scheme!r}")
    return SCHEMES[scheme].build(keys, k, global_seed=global_seed, **(config or {}))


@dataclass
class VerifyReport:
    passed: bool
    n: int
    k: int
    num_bins: int
    out_of_range: int = 0
    bad_bins: dict = field(default_factory=dict)  # bin -> count, first few offenders

    def __str__(self) -> str:
        state = "PASS" if self.passed else "FAIL"
        extra = "" if self.passed else f" out_of_range={self.out_of_range} bad_bins={self.bad_bins}"
        return f"{state} n={self.n} k={self.k} bins={self.num_bins}{extra}"


def verify(phf: MkPhf, keys, k: int | None = None) -> VerifyReport:
    """Exhaustive audit: every bin holds k keys except the last, which holds the rest."""
    k = phf.k if k is None else k
    hi, lo = keys if isinstance(keys, tuple) else hash_keys(keys, phf.global_seed)
    n = hi.shape[0]
    m = -(-n // k)
    bins = phf.query_many(hi, lo)
    bad_range = int(np.count_nonzero((bins < 0) | (bins >= m)))
    hist = np.bincount(bins[(bins >= 0) & (bins < m)], minlength=m)
    want = np.full(m, k)
    want[-1] = last_capacity(n, k)
    wrong = np.flatnonzero(hist != want)
    report = VerifyReport(bad_range == 0 and wrong.shape[0] == 0, n, k, m, bad_range,
                          {int(b): int(hist[b]) for b in wrong[:10]})
    return report


# --------------------------------------------------------------------------
# persistence

def save(phf: MkPhf, path) -> None:
    Path(path).write_bytes(phf.to_bytes())


def load(path, scheme: str | None = None, k: int | None = None) -> MkPhf:
    data = Path(path).read_bytes()
    sid, _ = read_header(data)
    if sid not in _BY_ID:
        raise FormatError(f"unknown scheme id {sid}")
    cls = _BY_ID[sid]
    if scheme is not None and SCHEMES.get(scheme) is not cls:
        raise FormatError(f"file holds a {_NAME_OF[cls]} structure, not {scheme}")
    phf = cls.from_bytes(data)
    if k is not None and phf.k != k:
        raise FormatError(f"file was built for k = {phf.k}, requested k = {k}")
    return phf


def scheme_name(phf: MkPhf) -> str:
    return _NAME_OF[type(phf)]


# --------------------------------------------------------------------------
# benchmarking

@dataclass
class BenchRecord:
    scheme: str
    config: str
    n: int
    k: int
    bits_per_key: float
    overhead_pct: float
    construct_ns_per_key: float
    query_ns_per_query: float
    verified: bool

    def row(self) -> list:
        return [self.scheme, self.config, self.n, self.k, f"{self.bits_per_key:.6f}",
                f"{self.overhead_pct:.3f}", f"{self.construct_ns_per_key:.1f}",
                f"{self.query_ns_per_query:.1f}"]


class VerificationError(RuntimeError):
    pass


def bench(scheme: str, config: dict, keys, k: int, runs: int = 3, queries: int = 10 ** 7,
          global_seed: int = 0, query_seed: int = 0) -> BenchRecord:
    """Median construction and query times of a verified build.

    Timing uses the 128-bit key hashes, so string hashing is not included.
    Queries are a pre-shuffled array of member keys.
    """
    if runs < 1:
        raise ValueError("need at least one construction run")
    hi, lo = as_hashes(keys, global_seed)
    n = hi.shape[0]
    build(scheme, (hi[:min(n, 64)], lo[:min(n, 64)]), k, config, global_seed)  # compile
    times, phf = [], None
    for _ in range(runs):
        t0 = time.perf_counter_ns()
        phf = build(scheme, (hi, lo), k, config, global_seed)
        times.append(time.perf_counter_ns() - t0)
        if len(times) == 1:
            report = verify(phf, (hi, lo), k)
            if not report.passed:
                raise VerificationError(str(report))
    idx = np.random.default_rng(query_seed).integers(0, n, queries)
    qhi, qlo = hi[idx], lo[idx]
    phf.query_many(qhi[:16], qlo[:16])
    qtimes = []
    for _ in range(3):
        t0 = time.perf_counter_ns()
        phf.query_many(qhi, qlo)
        qtimes.append(time.perf_counter_ns() - t0)
    bpk = phf.size_bits() / n
    return BenchRecord(scheme, config_string(config), n, k, bpk,
                       100.0 * (bpk / lower_bound_bits_per_key(k) - 1.0),
                       statistics.median(times) / n, statistics.median(qtimes) / queries, True)


def emit_csv(records, path=None) -> str:
    """Write records (verified ones only) as CSV; returns the text."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for r in records:
        if not r.verified:
            raise VerificationError(f"refusing to emit unverified record {r.scheme} {r.config}")
        w.writerow(r.row())
    text = buf.getvalue()
    if path is not None:
        Path(path).write_text(text)
    return text
