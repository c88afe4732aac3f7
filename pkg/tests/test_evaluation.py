import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import codes_from_strings
from zshash.errors import DataError
from zshash.evaluation import (
    CSV_HEADER, anchor_assignment_accuracy, average_precision, f1_score, format_rows, hamming_distance,
    hamming_matrix, lookup_metrics, mean_average_precision, radius_lookup,
)
from zshash.hashing import HashCode, HashCodeSet

# 10-code fixture: first four are queries, the rest the database (radius 1)
FIX_CODES = ["0000", "0001", "0011", "1100", "0000", "0010", "0111", "1101", "1110", "0100"]
FIX_LABELS = np.array([0, 0, 1, 1, 0, 0, 1, 1, 1, 0])
# random fixture: Python's random.Random(3), 8-bit codes, queries = first five
RAND_CODES = ["00111100", "10010111", "10001011", "00100001", "01011110", "11101010", "10011010", "01111001",
              "10100000", "10010100", "00010000", "10011011", "00000011", "11101000", "11010110", "01111000",
              "01000010", "10001101", "00111011", "00110001"]
RAND_LABELS = np.array([1, 1, 1, 0, 0, 0, 1, 0, 0, 0, 0, 1, 0, 1, 1, 1, 1, 1, 1, 0])


def _code(s):
    return codes_from_strings([s])[0]


def test_hamming_examples():
    assert hamming_distance(_code("1011"), _code("1011")) == 0
    c = np.where(np.random.default_rng(0).random(32) < 0.5, -1, 1)
    assert hamming_distance(HashCode.from_signs(c), HashCode.from_signs(-c)) == 32
    assert hamming_distance(_code("1011"), _code("1110")) == 2
    with pytest.raises(DataError):
        hamming_distance(_code("10"), _code("101"))


@given(st.integers(1, 128), st.integers(0, 10_000))
@settings(max_examples=100, deadline=None)
def test_metric_axioms(b, seed):
    rng = np.random.default_rng(seed)
    x, y, z = (HashCode.from_signs(np.where(rng.random(b) < 0.5, -1, 1)) for _ in range(3))
    assert hamming_distance(x, x) == 0
    assert hamming_distance(x, y) == hamming_distance(y, x)
    assert hamming_distance(x, z) <= hamming_distance(x, y) + hamming_distance(y, z)
    if hamming_distance(x, y) == 0:
        assert x == y


@given(st.integers(1, 128), st.integers(0, 10_000))
@settings(max_examples=100, deadline=None)
def test_packed_equals_naive(b, seed):
    rng = np.random.default_rng(seed)
    A = np.where(rng.random((7, b)) < 0.5, -1, 1)
    B = np.where(rng.random((5, b)) < 0.5, -1, 1)
    naive = (A[:, None, :] != B[None, :, :]).sum(-1)
    np.testing.assert_array_equal(hamming_matrix(HashCodeSet.from_signs(A), HashCodeSet.from_signs(B)), naive)


def test_radius_table():
    db = codes_from_strings(["0000", "0001", "0011", "0111", "1111", "1010", "0101", "1000"])
    np.testing.assert_array_equal(radius_lookup(_code("0010"), db, 2), [0, 1, 2, 3, 5, 7])
    assert list(radius_lookup(_code("0010"), db, 4)) == list(range(8))
    dup = codes_from_strings(["0010", "0011", "0010"])
    assert list(radius_lookup(_code("0010"), dup, 0)) == [0, 2]


@given(st.integers(0, 10_000), st.integers(0, 8), st.integers(0, 8))
@settings(max_examples=50, deadline=None)
def test_radius_monotone(seed, r1, r2):
    r1, r2 = min(r1, r2), max(r1, r2)
    rng = np.random.default_rng(seed)
    db = HashCodeSet.from_signs(np.where(rng.random((30, 8)) < 0.5, -1, 1))
    q = HashCode.from_signs(np.where(rng.random(8) < 0.5, -1, 1))
    assert set(radius_lookup(q, db, r1)) <= set(radius_lookup(q, db, r2))


def test_lookup_fixture():
    codes = codes_from_strings(FIX_CODES)
    q, db = np.arange(4), np.arange(4, 10)
    m = lookup_metrics(codes[q], FIX_LABELS[q], codes[db], FIX_LABELS[db], radius=1)
    assert m.precision == pytest.approx(19 / 24, abs=1e-15)
    assert m.recall == pytest.approx(7 / 12, abs=1e-15)
    assert m.f1 == pytest.approx(2 * (19 / 24) * (7 / 12) / (19 / 24 + 7 / 12), abs=1e-15)
    mp = mean_average_precision(codes[q], FIX_LABELS[q], codes[db], FIX_LABELS[db])
    assert mp == pytest.approx((1 + 13 / 15 + 8 / 15 + 5 / 6) / 4, abs=1e-15)


def test_random_map_fixture():
    codes = codes_from_strings(RAND_CODES)
    q, db = np.arange(5), np.arange(5, 20)
    mp = mean_average_precision(codes[q], RAND_LABELS[q], codes[db], RAND_LABELS[db])
    assert mp == pytest.approx(0.6282436809222524, abs=1e-15)


def test_self_retrieval_precision_one():
    codes = codes_from_strings(["0000", "0000", "1111", "1111", "0101"])
    labels = np.array([0, 0, 1, 1, 2])
    assert lookup_metrics(codes, labels, codes, labels, radius=0).precision == 1.0


def test_retrieve_all():
    rng = np.random.default_rng(1)
    codes = HashCodeSet.from_signs(np.where(rng.random((40, 6)) < 0.5, -1, 1))
    labels = rng.integers(0, 3, 40)
    m = lookup_metrics(codes[:10], labels[:10], codes[10:], labels[10:], radius=6)
    prior = np.mean([np.mean(labels[10:] == l) for l in labels[:10]])
    assert m.recall == 1.0
    assert m.precision == pytest.approx(prior)


def test_empty_retrieval_policy():
    codes = codes_from_strings(["0000", "1111", "0001"])
    labels = np.array([0, 0, 0])
    strict = lookup_metrics(codes[[0, 1]], labels[[0, 1]], codes[[2]], labels[[2]], radius=1)
    assert strict.precision == 0.5 and strict.n_empty == 1
    lenient = lookup_metrics(codes[[0, 1]], labels[[0, 1]], codes[[2]], labels[[2]], radius=1, empty_as_zero=False)
    assert lenient.precision == 1.0


def test_average_precision_examples():
    assert average_precision([True, True, True]) == 1.0
    assert average_precision([True, False, False]) == 1.0
    assert average_precision([False, False, False, True]) == 0.25
    codes = codes_from_strings(["0000", "0001", "0011"])
    assert mean_average_precision(codes[[0]], [1], codes[[1, 2]], [1, 1]) == 1.0
    with pytest.raises(DataError):
        mean_average_precision(codes[[0]], [1], codes[[]], [])


@given(st.integers(0, 10_000))
@settings(max_examples=40, deadline=None)
def test_map_permutation_invariant_with_distinct_distances(seed):
    rng = np.random.default_rng(seed)
    # distances 0..8 from the all-zero query are distinct by construction
    signs = -np.ones((9, 8), dtype=int)
    for i in range(9):
        signs[i, :i] = 1
    db = HashCodeSet.from_signs(signs)
    labels = rng.integers(0, 2, 9)
    q = HashCodeSet.from_signs(-np.ones((1, 8), dtype=int))
    perm = rng.permutation(9)
    a = mean_average_precision(q, [1], db, labels)
    b = mean_average_precision(q, [1], db[perm], labels[perm])
    assert a == b


@given(st.floats(0, 1), st.floats(0, 1))
def test_f1_formula(p, r):
    f = f1_score(p, r)
    assert f == (2 * p * r / (p + r) if p + r > 0 else 0.0)


def test_accuracy_examples():
    anchors = codes_from_strings(["0000", "1111", "0011"])
    codes = codes_from_strings(["0000", "1111", "0011", "0011"])
    rep = anchor_assignment_accuracy(codes, [0, 1, 2, 2], anchors, [0, 1, 2])
    assert rep.accuracy == 1.0
    np.testing.assert_array_equal(rep.confusion.sum(axis=1), [1, 1, 2])
    same = codes_from_strings(["0101"] * 3)
    rep = anchor_assignment_accuracy(codes, [0, 1, 2, 2], same, [0, 1, 2])
    np.testing.assert_array_equal(rep.assigned, [0, 0, 0, 0])


@given(st.integers(0, 10_000))
@settings(max_examples=40, deadline=None)
def test_accuracy_matches_brute_force(seed):
    rng = np.random.default_rng(seed)
    anchors = np.where(rng.random((4, 6)) < 0.5, -1, 1)
    codes = np.where(rng.random((25, 6)) < 0.5, -1, 1)
    labels = rng.integers(0, 4, 25)
    coa = rng.permutation(4)
    expected = []
    for c in codes:
        dists = [int(np.sum(c != a)) for a in anchors]
        expected.append(coa[dists.index(min(dists))])
    rep = anchor_assignment_accuracy(HashCodeSet.from_signs(codes), labels, HashCodeSet.from_signs(anchors), coa)
    np.testing.assert_array_equal(rep.assigned, expected)
    assert rep.accuracy == np.mean(np.array(expected) == labels)
    np.testing.assert_array_equal(rep.confusion.sum(axis=1), np.bincount(labels, minlength=4))


def test_format_rows():
    text = format_rows([{"method": "kernel_pca", "code_length": 8, "precision": 0.5}], extra_columns=())
    lines = text.splitlines()
    assert lines[0] == ",".join(CSV_HEADER)
    assert lines[1].startswith("kernel_pca,8,,,0.500000")
