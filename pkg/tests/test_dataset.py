import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from zshash.dataset import (
    DatasetBundle, FeatureMatrix, LabelVector, SignatureMatrix, draw_unseen_classes, generate_synthetic,
    load_dataset, split_query_database, split_seen_unseen, write_dataset,
)
from zshash.errors import ConfigError, DataError


def _write(tmp_path, feats, labels, sigs):
    (tmp_path / "f.csv").write_text(feats)
    (tmp_path / "l.csv").write_text(labels)
    (tmp_path / "s.csv").write_text(sigs)
    return tmp_path / "f.csv", tmp_path / "l.csv", tmp_path / "s.csv"


def test_minimal_bundle(tmp_path):
    paths = _write(tmp_path, "1,2\n3,4\n5,6\n", "0\n1\n0\n", "1,0\n0,1\n")
    b = load_dataset(*paths)
    assert len(b) == 3 and b.n_classes == 2
    assert b.X.shape == (3, 2)
    np.testing.assert_array_equal(b.y, [0, 1, 0])


def test_label_out_of_range(tmp_path):
    paths = _write(tmp_path, "1\n2\n", "0\n5\n", "1,0\n0,1\n")
    with pytest.raises(DataError, match="label out of range"):
        load_dataset(*paths)


def test_non_finite_feature(tmp_path):
    paths = _write(tmp_path, "1,inf\n2,3\n", "0\n1\n", "1,0\n")
    with pytest.raises(DataError, match="non-finite feature"):
        load_dataset(*paths)


def test_signature_range():
    with pytest.raises(DataError, match=r"outside \[0,1\]"):
        SignatureMatrix(np.array([[1.5, 0.2]]))


def test_first_appearance_remap(tmp_path):
    paths = _write(tmp_path, "0\n1\n2\n", "2\n0\n2\n", "0.1,0.2,0.3\n")
    b = load_dataset(*paths)
    np.testing.assert_array_equal(b.y, [0, 1, 0])
    np.testing.assert_allclose(b.S[0], [0.3, 0.1, 0.2])
    assert list(b.class_names) == ["2", "0", "1"]


def test_round_trip(tmp_path):
    split = generate_synthetic(3, 1, 4, 5, 3, 0.37, seed=2)
    b = split.merged()
    write_dataset(b, tmp_path)
    again = load_dataset(tmp_path / "features.csv", tmp_path / "labels.csv", tmp_path / "signatures.csv")
    np.testing.assert_array_equal(again.X, b.X)
    np.testing.assert_array_equal(again.y, b.y)
    np.testing.assert_array_equal(again.S, b.S)


def _bundle(n_classes, per_class=3, seed=0):
    rng = np.random.default_rng(seed)
    y = np.repeat(np.arange(n_classes), per_class)
    return DatasetBundle(FeatureMatrix(rng.normal(size=(y.size, 4))), LabelVector(y, n_classes),
                         SignatureMatrix(rng.uniform(0.1, 1, size=(6, n_classes))))


def test_split_counts():
    split = split_seen_unseen(_bundle(50, per_class=1), list(range(40, 50)))
    assert split.n_seen == 40 and split.n_unseen == 10


def test_split_single_unseen():
    split = split_seen_unseen(_bundle(4), [3])
    assert split.seen.S.shape[1] == 3 and split.unseen.S.shape[1] == 1


def test_split_all_unseen_rejected():
    with pytest.raises(ConfigError):
        split_seen_unseen(_bundle(4), [0, 1, 2, 3])


@given(st.integers(3, 8), st.integers(0, 2**31 - 1))
@settings(max_examples=30, deadline=None)
def test_split_preserves_instances(n_classes, seed):
    b = _bundle(n_classes, seed=seed % 1000)
    unseen = draw_unseen_classes(n_classes, 1 + seed % (n_classes - 1), seed)
    split = split_seen_unseen(b, unseen)
    merged = np.vstack([split.seen.X, split.unseen.X])
    assert len(merged) == len(b)
    key = lambda A: sorted(map(tuple, A))  # noqa: E731
    assert key(merged) == key(b.X)


def test_query_database_split():
    q, db = split_query_database(np.arange(100), None, 0.25, seed=7)
    assert len(q) == 25 and len(db) == 75
    assert set(q).isdisjoint(db) and set(q) | set(db) == set(range(100))
    q2, db2 = split_query_database(np.arange(100), None, 0.25, seed=7)
    np.testing.assert_array_equal(q, q2)
    np.testing.assert_array_equal(db, db2)


@pytest.mark.parametrize("frac", [0.0, 1.0])
def test_query_fraction_bounds(frac):
    with pytest.raises(Exception):
        split_query_database(np.arange(10), None, frac, seed=0)


def test_synthetic_counts_and_determinism():
    a = generate_synthetic(8, 2, 50, 32, 16, 0.1, seed=1)
    b = generate_synthetic(8, 2, 50, 32, 16, 0.1, seed=1)
    assert len(a.seen) == 400 and len(a.unseen) == 100
    np.testing.assert_array_equal(a.seen.X, b.seen.X)
    np.testing.assert_array_equal(a.unseen.X, b.unseen.X)
    np.testing.assert_array_equal(a.seen.S, b.seen.S)


def test_synthetic_zero_spread():
    split = generate_synthetic(3, 1, 5, 4, 3, 0.0, seed=4)
    for bundle in (split.seen, split.unseen):
        for c in range(bundle.n_classes):
            assert np.all(np.ptp(bundle.X[bundle.y == c], axis=0) == 0)


def test_one_hot_is_signed():
    Y = LabelVector(np.array([0, 2, 1]), 3).one_hot()
    np.testing.assert_array_equal(Y, [[1, -1, -1], [-1, -1, 1], [-1, 1, -1]])
