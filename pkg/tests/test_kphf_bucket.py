import numpy as np
import pytest

from kperfect.bucket_opt import beta_curve
from kperfect.harness import random_hashes, verify
from kperfect.hashing import TAG_PLACE, derive_many
from kperfect.kphf_bucket import (BucketMkPhf, _place, bucket_index, bucket_index_many,
                                  default_lambda, encode_seeds)
from kperfect.serial import FormatError
from kperfect.succinct import GolombRiceSeq, unpack_fixed


def test_bucket_index_endpoints():
    beta = beta_curve(10).ys
    assert bucket_index(0.0, 1000.0, 1000, beta) == 0
    assert bucket_index(1.0, 1000.0, 1000, beta) == 999
    assert bucket_index(1.0, 1000.5, 1001, beta) == 1000
    u = np.linspace(0, 1, 10001)
    b = bucket_index_many(u, 1000.0, 1000, beta)
    assert np.all(np.diff(b) >= 0) and b.max() == 999


def test_bucket_sizes_skewed():
    n, k, lam = 10 ** 6, 100, 100.0
    keys = random_hashes(n, 0)
    phf = BucketMkPhf.build(keys, k, lam=lam)
    sizes = phf.stats["bucket_sizes"]
    deciles = [d.mean() for d in np.array_split(sizes.astype(float), 10)]
    assert deciles[0] >= 10 * deciles[-1]
    assert verify(phf, keys).passed


def brute_force_seeds(hi, lo, groups, order, caps, salt, limit=10 ** 4):
    """Smallest seed per bucket, placing buckets in ``order``, via the vectorized hash."""
    m, n, k = caps.shape[0], int(caps.sum()), int(caps[0])
    occ = np.zeros(m, dtype=np.int64)
    seeds = {}
    for b in order:
        idx = groups[b]
        for s in range(limit):
            v = derive_many(hi[idx], lo[idx], TAG_PLACE, salt + s)
            bins = [((int(x) * n) >> 64) // k for x in v]
            trial = occ + np.bincount(bins, minlength=m)
            if np.all(trial <= caps):
                occ = trial
                seeds[b] = s
                break
    return seeds


def test_place_micro_fixture():
    # m = 2 bins of capacity 2, two buckets of two keys
    hi, lo = random_hashes(4, 1)
    starts = np.array([0, 2, 4], dtype=np.int64)
    caps = np.array([2, 2], dtype=np.int64)
    salt = 12345
    for proc in ([0, 1], [1, 0]):
        seeds = np.zeros(2, dtype=np.int64)
        trials = np.zeros(2, dtype=np.int64)
        assert _place(hi, lo, starts, np.array(proc, dtype=np.int64), caps, np.uint64(salt), 10 ** 4,
                      seeds, trials) == -1
        want = brute_force_seeds(hi, lo, {0: [0, 1], 1: [2, 3]}, proc, caps, salt)
        assert seeds.tolist() == [want[0], want[1]]
        assert trials.tolist() == [want[0] + 1, want[1] + 1]


def test_place_self_collisions_allowed():
    # one bucket of k keys into a single bin
    hi, lo = random_hashes(3, 2)
    seeds = np.zeros(1, dtype=np.int64)
    trials = np.zeros(1, dtype=np.int64)
    assert _place(hi, lo, np.array([0, 3], dtype=np.int64), np.zeros(1, dtype=np.int64),
                  np.array([3], dtype=np.int64), np.uint64(0), 10, seeds, trials) == -1
    assert seeds[0] == 0


def test_empty_bucket_seed_zero():
    keys = random_hashes(2000, 3)
    phf = BucketMkPhf.build(keys, 10, lam=12)
    empty = phf.stats["bucket_sizes"] == 0
    assert empty.any()
    assert np.all(phf.seeds()[empty] == 0)


def test_full_build_matches_brute_force():
    n, k = 60, 4
    hi, lo = random_hashes(n, 4)
    phf = BucketMkPhf.build((hi, lo), k, lam=5)
    sizes = phf.stats["bucket_sizes"]
    b = np.repeat(np.arange(phf.nbuckets), sizes)
    order = np.argsort(phf.buckets_of(hi, lo), kind="stable")
    groups = {i: order[b == i] for i in range(phf.nbuckets)}
    caps = np.full(-(-n // k), k)
    caps[-1] = n - (caps.shape[0] - 1) * k
    proc = np.lexsort((np.arange(phf.nbuckets), -sizes))
    want = brute_force_seeds(hi, lo, groups, proc, caps, phf.salt)
    assert [want[i] for i in range(phf.nbuckets)] == phf.seeds().tolist()


def test_encode_seeds_compact():
    packed, width = encode_seeds(np.zeros(5, dtype=np.int64), "compact")
    assert width == 1
    packed, width = encode_seeds(np.array([0, 1, 2, 3]), "compact")
    assert width == 2
    assert unpack_fixed(packed, 4, 2).tolist() == [0, 1, 2, 3]


def test_encode_seeds_rice():
    seeds = np.array([0, 3, 7, 100, 2])
    gr, L = encode_seeds(seeds, "rice")
    assert L == int(np.floor(np.log2(seeds.mean() + 1)))
    assert isinstance(gr, GolombRiceSeq) and gr.to_array().tolist() == seeds.tolist()
    with pytest.raises(ValueError):
        encode_seeds(seeds, "elias")


def test_rice_smaller_than_compact():
    keys = random_hashes(10 ** 6, 5)
    rice = BucketMkPhf.build(keys, 10, lam=12, mode="rice")
    compact = BucketMkPhf.build(keys, 10, lam=12, mode="compact")
    assert np.array_equal(rice.seeds(), compact.seeds())
    assert rice.bits_per_key() < compact.bits_per_key()
    assert verify(rice, keys).passed and verify(compact, keys).passed


@pytest.mark.parametrize("mode", ["rice", "compact"])
@pytest.mark.parametrize("k", [1, 2, 10, 100])
def test_minimal_k_perfect(mode, k):
    keys = random_hashes(20_011, k)
    phf = BucketMkPhf.build(keys, k, mode=mode)
    assert verify(phf, keys).passed


def test_decile_trials_flat():
    keys = random_hashes(10 ** 6, 0)
    phf = BucketMkPhf.build(keys, 10, lam=12)
    deciles = [d.mean() for d in np.array_split(phf.stats["trials"].astype(float), 10)]
    assert max(deciles) / min(deciles) <= 4


@pytest.mark.parametrize("mode", ["rice", "compact"])
def test_round_trip_and_determinism(mode):
    keys = random_hashes(30_000, 6)
    a = BucketMkPhf.build(keys, 10, mode=mode, global_seed=4)
    b = BucketMkPhf.build(keys, 10, mode=mode, global_seed=4)
    assert a.to_bytes() == b.to_bytes()
    c = BucketMkPhf.from_bytes(a.to_bytes())
    probe = random_hashes(3000, 7)
    assert np.array_equal(c.query_many(*keys), a.query_many(*keys))
    out = c.query_many(*probe)
    assert np.array_equal(out, a.query_many(*probe))
    assert out.min() >= 0 and out.max() < a.num_bins


def test_errors():
    keys = random_hashes(100, 8)
    with pytest.raises(ValueError):
        BucketMkPhf.build(keys, 10, mode="fancy")
    with pytest.raises(ValueError):
        BucketMkPhf.build(keys, 0)
    with pytest.raises(ValueError):
        BucketMkPhf.build(keys, 10, lam=0)
    data = BucketMkPhf.build(keys, 10).to_bytes()
    with pytest.raises(FormatError):
        BucketMkPhf.from_bytes(data[:-8])


def test_default_lambda_interpolates():
    assert default_lambda(10) == 12.0
    assert 12.0 < default_lambda(30) < 60.0
