import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.spatial.distance import pdist

from zshash.embedding import (
    AnchorEmbedding, EmbedderSpec, embed_anchors, isomap, kernel_pca, lle, lle_weights, load_precomputed,
)
from zshash.errors import ConfigError, DataError

SQUARE = np.array([[1.0, 1.0], [-1.0, 1.0], [-1.0, -1.0], [1.0, -1.0]])


def _projector_oracle(B, b):
    """Gram matrix of the top-b eigen-coordinates of symmetric B, by direct decomposition."""
    w, V = np.linalg.eigh(B)
    top = np.argsort(w)[::-1][:b]
    return (V[:, top] * w[top]) @ V[:, top].T


def test_two_points_opposite():
    Y = kernel_pca(np.array([[0.0, 0.0], [2.0, 0.0]]), 1.0, 1)
    assert Y[0, 0] == pytest.approx(-Y[1, 0])
    assert Y[0, 0] != 0


def test_wide_bandwidth_collapses_rank():
    P = np.random.default_rng(0).normal(size=(5, 3))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        Y = kernel_pca(P, 1e12, 3)
    assert np.allclose(Y, 0.0, atol=1e-10)


def test_square_kernel_pca_matches_oracle():
    bw = 2.0
    K = np.exp(-np.square(SQUARE[:, None] - SQUARE[None]).sum(-1) / bw**2)
    J = np.eye(4) - 0.25
    Y = kernel_pca(SQUARE, bw, 2)
    np.testing.assert_allclose(Y @ Y.T, _projector_oracle(J @ K @ J, 2), atol=1e-12)
    d = np.linalg.norm(Y[:, None] - Y[None], axis=-1)
    sides = [d[0, 1], d[1, 2], d[2, 3], d[3, 0]]
    np.testing.assert_allclose(sides, sides[0], rtol=1e-10)
    assert d[0, 2] == pytest.approx(d[1, 3], rel=1e-10)


def test_kernel_pca_columns_orthogonal():
    P = np.random.default_rng(4).normal(size=(9, 5))
    Y = kernel_pca(P, 2.0, 6)
    G = Y.T @ Y
    norms = np.linalg.norm(Y, axis=0)
    off = G - np.diag(np.diag(G))
    assert np.all(np.abs(off) < 1e-8 * np.outer(norms, norms) + 1e-15)


def test_isomap_line_is_monotone():
    P = np.array([[0.0, 0.0], [1.0, 1.0], [2.5, 2.5], [4.0, 4.0], [7.0, 7.0]])
    y = isomap(P, 2, 1)[:, 0]
    steps = np.diff(y)
    assert np.all(steps > 0) or np.all(steps < 0)


def test_isomap_equilateral_triangle():
    P = np.array([[0.0, 0.0], [1.0, 0.0], [0.5, np.sqrt(3) / 2]])
    d = pdist(isomap(P, 2, 2))
    np.testing.assert_allclose(d, 1.0, rtol=1e-10)


def test_isomap_bridges_components():
    P = np.array([[0.0, 0.0], [0.1, 0.0], [10.0, 0.0], [10.1, 0.0]])
    Y = isomap(P, 1, 1)
    assert np.all(np.isfinite(Y))
    # bridged at the closest cross pair (points 1 and 2): geodesics become line distances
    np.testing.assert_allclose(pdist(Y), pdist(P), atol=1e-9)


def test_lle_collinear_reconstruction():
    P = np.column_stack([np.arange(6.0), 2 * np.arange(6.0)])
    W = lle_weights(P, 2, reg=1e-9)
    err = np.linalg.norm(P - W @ P, axis=1)
    assert np.all(err[1:-1] < 1e-6)


def test_lle_pentagon_matches_oracle():
    t = 2 * np.pi * np.arange(5) / 5
    P = np.column_stack([np.cos(t), np.sin(t)])
    Y = lle(P, 2, 2)
    # each vertex sits symmetrically between its two neighbours: weights 1/2
    W = np.zeros((5, 5))
    for i in range(5):
        W[i, (i - 1) % 5] = W[i, (i + 1) % 5] = 0.5
    A = (np.eye(5) - W).T @ (np.eye(5) - W)
    w, V = np.linalg.eigh(A)
    oracle = V[:, 1:3] @ V[:, 1:3].T
    np.testing.assert_allclose(Y @ Y.T, oracle, atol=1e-10)
    r = np.linalg.norm(Y - Y.mean(0), axis=1)
    np.testing.assert_allclose(r, r[0], rtol=1e-8)
    steps = [np.linalg.norm(Y[i] - Y[(i + 1) % 5]) for i in range(5)]
    np.testing.assert_allclose(steps, steps[0], rtol=1e-8)


def test_lle_rejects_b_equal_n():
    with pytest.raises(ConfigError):
        lle(SQUARE, 2, 4)


def test_code_length_bound():
    P = np.random.default_rng(1).normal(size=(40, 6))
    # a centred kernel has rank n-1, so the last column is zero padding
    with pytest.warns(RuntimeWarning, match="padding"):
        M = embed_anchors(P, EmbedderSpec("kernel_pca"), 40).M
    assert M.shape == (40, 40)
    with pytest.raises(ConfigError):
        embed_anchors(P, EmbedderSpec("kernel_pca"), 41)


def test_identical_anchors_rejected():
    with pytest.raises(DataError):
        embed_anchors(np.ones((4, 3)), EmbedderSpec(), 2)


@pytest.mark.parametrize("kind", ["kernel_pca", "isomap", "lle"])
def test_deterministic(kind):
    P = np.random.default_rng(2).normal(size=(8, 4))
    a = embed_anchors(P, EmbedderSpec(kind), 4).M
    b = embed_anchors(P.copy(), EmbedderSpec(kind), 4).M
    assert np.array_equal(a, b)
    assert np.all(np.isfinite(a)) and np.linalg.norm(a) > 0


@pytest.mark.parametrize("kind", ["kernel_pca", "isomap", "lle"])
@given(shift=st.lists(st.floats(-50, 50), min_size=4, max_size=4), seed=st.integers(0, 500))
@settings(max_examples=20, deadline=None)
def test_translation_invariance(kind, shift, seed):
    P = np.random.default_rng(seed).normal(size=(7, 4))
    a = embed_anchors(P, EmbedderSpec(kind), 3).M
    b = embed_anchors(P + np.array(shift), EmbedderSpec(kind), 3).M
    # compare after aligning each column's sign
    signs = np.sign(np.sum(a * b, axis=0))
    signs[signs == 0] = 1
    np.testing.assert_allclose(a, b * signs, atol=1e-6)


def test_save_load_and_precomputed(tmp_path):
    P = np.random.default_rng(3).normal(size=(6, 3))
    emb = embed_anchors(P, EmbedderSpec("isomap", n_neighbors=3), 3)
    emb.save(tmp_path)
    back = AnchorEmbedding.load(tmp_path)
    np.testing.assert_array_equal(back.M, emb.M)
    assert back.embedder == emb.embedder
    pre = load_precomputed(tmp_path / "embedding.csv")
    np.testing.assert_array_equal(pre.M, emb.M)
    assert pre.embedder.kind == "precomputed"


def test_spec_validation():
    with pytest.raises(ConfigError):
        EmbedderSpec("tsne")
    with pytest.raises(ConfigError):
        EmbedderSpec("kernel_pca", bandwidth=-1.0)
