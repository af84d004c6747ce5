"""Minimal k-perfect hash functions.

Four constructions map n keys to ceil(n/k) bins with exactly k keys per bin
(the last bin takes the remainder): threshold-based bumping, bucket
placement, RecSplit-style splitting trees and a PaCHash-style index.
"""
from .base import MkPhf
from .harness import (BenchRecord, bench, build, emit_csv, gen_keys, load, lower_bound_bits_per_key,
                      save, verify)
from .hashing import Key128, hash_key, hash_keys
from .kphf_bucket import BucketMkPhf
from .kphf_pachash import PaCHashMkPhf
from .kphf_recsplit import RecSplitMkPhf
from .kphf_threshold import ThresholdMkPhf

__all__ = [
    "MkPhf", "ThresholdMkPhf", "BucketMkPhf", "RecSplitMkPhf", "PaCHashMkPhf",
    "Key128", "hash_key", "hash_keys",
    "BenchRecord", "bench", "build", "emit_csv", "gen_keys", "load", "lower_bound_bits_per_key",
    "save", "verify",
]
__version__ = "0.1.0"
