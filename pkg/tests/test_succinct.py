import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kperfect.serial import FormatError, Reader, Writer
from kperfect.succinct import BitVec, EliasFanoSeq, GolombRiceSeq, pack_fixed, unpack_fixed


def test_bitvec_small():
    bv = BitVec.from_bits([1, 0, 1, 1, 0])
    assert bv.rank1(3) == 2
    assert bv.select1(2) == 3
    assert bv.rank1(5) == 3
    assert bv.select0(1) == 4
    assert [bv[i] for i in range(5)] == [1, 0, 1, 1, 0]


def test_bitvec_errors():
    bv = BitVec.from_bits([0] * 100)
    with pytest.raises(IndexError):
        bv.select1(0)
    with pytest.raises(IndexError):
        bv.rank1(101)
    assert bv.rank1(100) == 0


@pytest.mark.parametrize("density", [0.01, 0.5, 0.97])
def test_bitvec_against_linear_scan(density):
    rng = np.random.default_rng(int(density * 100))
    bits = (rng.random(10 ** 5) < density).astype(np.uint8)
    bv = BitVec.from_bits(bits)
    prefix = np.concatenate([[0], np.cumsum(bits)])
    ones = np.flatnonzero(bits)
    zeros = np.flatnonzero(bits == 0)
    assert bv.rank1(len(bits)) == int(bits.sum())
    for pos in rng.integers(0, len(bits) + 1, 10 ** 4):
        assert bv.rank1(int(pos)) == prefix[pos]
    for r in rng.integers(0, len(ones), 3000):
        assert bv.select1(int(r)) == ones[r]
    for r in rng.integers(0, len(zeros), 3000):
        assert bv.select0(int(r)) == zeros[r]


def test_bitvec_directory_budget():
    for length in (2 ** 16, 2 ** 20 + 77):
        bits = np.random.default_rng(length).integers(0, 2, length)
        bv = BitVec.from_bits(bits)
        assert bv.directory_bits <= 0.25 * length


def test_bitvec_round_trip():
    bits = np.random.default_rng(5).integers(0, 2, 1000)
    w = Writer()
    BitVec.from_bits(bits).write(w)
    bv = BitVec.read(Reader(w.getvalue()))
    assert [bv[i] for i in range(1000)] == bits.tolist()


def test_ef_all_zero():
    ef = EliasFanoSeq.encode([0, 0, 0])
    assert ef.L == 0
    assert ef.to_array().tolist() == [0, 0, 0]


def test_ef_small_formula():
    vals = [2, 3, 5, 7, 11, 13]
    ef = EliasFanoSeq.encode(vals)
    assert ef.L == math.ceil(math.log2(13 / 6)) == 2
    assert ef.to_array().tolist() == vals


def test_ef_rejects_decreasing():
    with pytest.raises(ValueError):
        EliasFanoSeq.encode([1, 3, 2])


def test_ef_large_round_trip_and_size():
    rng = np.random.default_rng(11)
    vals = np.sort(rng.integers(0, 2 ** 40, 10 ** 5, dtype=np.uint64))
    ef = EliasFanoSeq.encode(vals)
    assert np.array_equal(ef.to_array(), vals)
    n = len(vals)
    assert ef.L == math.ceil(math.log2(int(vals[-1]) / n))
    # one terminating zero in the upper bits on top of n(2 + L)
    assert ef.payload_bits <= n * (2 + ef.L) + 1
    assert ef.upper.directory_bits <= 0.25 * ef.upper.length
    back = EliasFanoSeq.from_bytes(ef.to_bytes())
    assert np.array_equal(back.to_array(), vals)


def test_ef_predecessor_examples():
    ef = EliasFanoSeq.encode([2, 3, 5, 7])
    assert ef.predecessor(6) == (2, 5)
    assert ef.predecessor(7) == (3, 7)
    assert ef.successor_index(7) == 4
    assert ef.predecessor(1) == (-1, None)
    assert ef.successor_index(1) == 0
    assert ef.predecessor(10 ** 9) == (3, 7)


def test_ef_predecessor_empty():
    with pytest.raises(ValueError):
        EliasFanoSeq.encode([]).predecessor(3)


@pytest.mark.parametrize("spread", [50, 10 ** 6])
def test_ef_predecessor_against_search(spread):
    rng = np.random.default_rng(spread)
    vals = np.sort(rng.integers(0, spread, 5000, dtype=np.uint64))
    ef = EliasFanoSeq.encode(vals)
    xs = rng.integers(0, spread + 10, 10 ** 5, dtype=np.uint64)
    want = np.searchsorted(vals, xs, side="right") - 1
    assert np.array_equal(ef.predecessor_many(xs), want)


def test_ef_corrupt_upper():
    ef = EliasFanoSeq.encode([1, 2, 3])
    data = bytearray(ef.to_bytes())
    data[0] = 4  # claim four entries
    with pytest.raises(FormatError):
        EliasFanoSeq.from_bytes(bytes(data))


def test_gr_bit_costs():
    seq = GolombRiceSeq.encode([5], 2)
    assert seq.lower_bits == 2 and seq.unary.length == 2
    assert seq.payload_bits == 4
    assert seq[0] == 5
    # low part 01, unary part "01": a zero then the terminating one
    assert int(seq.lower[0]) == 1
    assert [seq.unary[i] for i in range(2)] == [0, 1]
    zero = GolombRiceSeq.encode([0], 0)
    assert zero.payload_bits == 1 and zero[0] == 0


def test_gr_per_entry_widths():
    rng = np.random.default_rng(3)
    widths = rng.integers(0, 12, 2000)
    vals = rng.integers(0, 4, 2000) << widths | rng.integers(0, 1 << 12, 2000) % (1 << widths)
    seq = GolombRiceSeq.encode(vals, widths)
    assert np.array_equal(seq.to_array(), vals.astype(np.uint64))
    assert seq.payload_bits == int(np.sum(widths + (vals >> widths) + 1))
    with pytest.raises(ValueError):
        GolombRiceSeq.from_bytes(seq.to_bytes())
    back = GolombRiceSeq.from_bytes(seq.to_bytes(), widths)
    assert np.array_equal(back.to_array(), vals.astype(np.uint64))


@pytest.mark.parametrize("L", [0, 3, 8])
def test_gr_geometric_cost(L):
    p = 2.0 ** -L
    rng = np.random.default_rng(L)
    vals = rng.geometric(p, 10 ** 4) - 1
    seq = GolombRiceSeq.encode(vals, L)
    mean = seq.payload_bits / len(vals)
    q = 1 - p
    entropy = (-q * math.log2(q) - p * math.log2(p)) / p if L else 0.0
    assert mean <= entropy + 0.5 + 1e-9 if L else mean == 1.0
    analytic = L + 1 / (1 - q ** (2 ** L)) if L else 1.0
    assert abs(mean - analytic) <= 0.02 * analytic


@settings(max_examples=60, deadline=None)
@given(st.lists(st.integers(0, 2 ** 40), max_size=300))
def test_ef_property_round_trip(xs):
    xs = sorted(xs)
    ef = EliasFanoSeq.encode(xs)
    assert ef.to_array().tolist() == xs
    if xs:
        probe = np.array(xs + [x + 1 for x in xs], dtype=np.uint64)
        want = np.searchsorted(np.array(xs, dtype=np.uint64), probe, side="right") - 1
        assert np.array_equal(ef.predecessor_many(probe), want)


@settings(max_examples=60, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 2 ** 20), st.integers(0, 16)), max_size=300))
def test_gr_property_round_trip(pairs):
    vals = np.array([v for v, _ in pairs], dtype=np.uint64)
    widths = np.array([w for _, w in pairs], dtype=np.int64)
    seq = GolombRiceSeq.encode(vals, widths)
    assert np.array_equal(seq.to_array(), vals)
    assert seq.payload_bits == int(sum(w + (int(v) >> w) + 1 for v, w in pairs))


@settings(max_examples=40, deadline=None)
@given(st.lists(st.integers(0, 2 ** 13 - 1), max_size=200))
def test_fixed_width_packing(xs):
    packed = pack_fixed(np.array(xs, dtype=np.uint64), 13)
    assert unpack_fixed(packed, len(xs), 13).tolist() == xs
