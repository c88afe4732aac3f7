"""Low-dimensional embedding of the anchor points (Kernel-PCA, Isomap, LLE)."""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Union

import numpy as np
from scipy.sparse.csgraph import connected_components, shortest_path
from scipy.spatial.distance import pdist, squareform

from .errors import ConfigError, DataError, NumericError

EMBEDDERS = ("kernel_pca", "isomap", "lle")
_ALIASES = {
    "kernelpca": "kernel_pca",
    "kernel-pca": "kernel_pca",
    "kpca": "kernel_pca",
    "locally_linear": "lle",
}
LLE_REG = 1e-3


@dataclass(frozen=True)
class EmbedderSpec:
    kind: str = "kernel_pca"
    bandwidth: Union[float, str] = "median"
    n_neighbors: int = 5
    lle_reg: float = LLE_REG

    def __post_init__(self):
        kind = _ALIASES.get(self.kind.lower(), self.kind.lower())
        if kind not in EMBEDDERS + ("precomputed",):
            raise ConfigError(f"unknown embedder {self.kind!r}; choose from {', '.join(EMBEDDERS)}")
        object.__setattr__(self, "kind", kind)
        if isinstance(self.bandwidth, str):
            if self.bandwidth != "median":
                object.__setattr__(self, "bandwidth", float(self.bandwidth))
        if not isinstance(self.bandwidth, str) and not self.bandwidth > 0:
            raise ConfigError("kernel bandwidth must be > 0")
        if self.n_neighbors < 1:
            raise ConfigError("n_neighbors must be >= 1")

    def to_dict(self) -> dict:
        return {"kind": self.kind, "bandwidth": self.bandwidth,
                "n_neighbors": self.n_neighbors, "lle_reg": self.lle_reg}


@dataclass(frozen=True)
class AnchorEmbedding:
    """n x b matrix whose row q is the code-space coordinate of anchor q."""

    M: np.ndarray
    embedder: EmbedderSpec = EmbedderSpec()

    def __post_init__(self):
        M = np.array(self.M, dtype=np.float64)
        if M.ndim != 2:
            raise DataError("embedding must be a 2-D matrix")
        if M.shape[1] > M.shape[0]:
            raise DataError(f"code length {M.shape[1]} exceeds number of anchors {M.shape[0]}")
        if not np.all(np.isfinite(M)):
            raise DataError("embedding entries must be finite")
        M.setflags(write=False)
        object.__setattr__(self, "M", M)

    @property
    def code_length(self) -> int:
        return self.M.shape[1]

    @property
    def n_anchors(self) -> int:
        return self.M.shape[0]

    def save(self, directory, stem: str = "embedding") -> None:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        np.savetxt(directory / f"{stem}.csv", self.M, fmt="%.17g", delimiter=",")
        (directory / f"{stem}.json").write_text(json.dumps(self.embedder.to_dict(), indent=2) + "\n")

    @classmethod
    def load(cls, directory, stem: str = "embedding") -> "AnchorEmbedding":
        directory = Path(directory)
        M = np.loadtxt(directory / f"{stem}.csv", delimiter=",", ndmin=2)
        spec_file = directory / f"{stem}.json"
        spec = EmbedderSpec(**json.loads(spec_file.read_text())) if spec_file.exists() else EmbedderSpec("precomputed")
        return cls(M, spec)


def load_precomputed(path) -> AnchorEmbedding:
    """Wrap an externally computed n x b embedding CSV (e.g. t-SNE output)."""
    M = np.loadtxt(path, delimiter=",", ndmin=2)
    return AnchorEmbedding(M, EmbedderSpec("precomputed"))


def _fix_signs(V: np.ndarray) -> np.ndarray:
    # largest-magnitude entry of each column made positive
    idx = np.argmax(np.abs(V), axis=0)
    signs = np.sign(V[idx, np.arange(V.shape[1])])
    signs[signs == 0] = 1.0
    return V * signs


def _top_eigen_coords(B: np.ndarray, b: int, what: str):
    """Top-b eigenvectors of symmetric ``B`` scaled by sqrt(eigenvalue), and the eigenvalues.

    Non-positive modes are zeroed.
    """
    B = (B + B.T) / 2
    evals, evecs = np.linalg.eigh(B)
    order = np.argsort(evals, kind="stable")[::-1][:b]
    evals, evecs = evals[order], _fix_signs(evecs[:, order])
    scale = max(evals[0], 0.0) if evals.size else 0.0
    positive = evals > 1e-10 * max(scale, 1e-300)
    if not positive.all():
        warnings.warn(
            f"{what}: only {int(positive.sum())} positive eigenvalues for b={b}; padding with zero columns",
            RuntimeWarning,
            stacklevel=3,
        )
    lam = np.where(positive, evals, 0.0)
    return evecs * np.sqrt(lam), lam


def median_distance(points: np.ndarray) -> float:
    return float(np.median(pdist(points)))


def kernel_pca(points, bandwidth: float, b: int, return_eigenvalues: bool = False):
    """RBF Kernel-PCA coordinates, ``K_ij = exp(-|p_i - p_j|^2 / bandwidth^2)``."""
    P = np.asarray(points, dtype=np.float64)
    if not bandwidth > 0:
        raise ConfigError("bandwidth must be > 0")
    n = P.shape[0]
    K = np.exp(-squareform(pdist(P, "sqeuclidean")) / bandwidth**2)
    J = np.eye(n) - 1.0 / n
    Kc = J @ K @ J
    Y, lam = _top_eigen_coords(Kc, b, "kernel_pca")
    return (Y, lam) if return_eigenvalues else Y


def knn_graph(points: np.ndarray, k: int):
    """Symmetrized k-NN graph as a dense matrix of edge lengths (0 = no edge), plus all distances."""
    D = squareform(pdist(points))
    n = D.shape[0]
    G = np.zeros_like(D)
    for i in range(n):
        order = np.argsort(D[i], kind="stable")
        nbrs = [j for j in order if j != i][:k]
        G[i, nbrs] = D[i, nbrs]
    G = np.maximum(G, G.T)
    return G, D


def _bridge_components(G: np.ndarray, D: np.ndarray) -> np.ndarray:
    G = G.copy()
    while True:
        n_comp, lab = connected_components(G > 0, directed=False)
        if n_comp == 1:
            return G
        # closest pair between component 0 and any other component
        inside = lab == 0
        sub = np.where(inside[:, None] & ~inside[None, :], D, np.inf)
        i, j = np.unravel_index(np.argmin(sub), sub.shape)
        # coincident points still need a positive edge to register as connected
        G[i, j] = G[j, i] = max(D[i, j], np.finfo(float).tiny)


def classical_mds(D: np.ndarray, b: int) -> np.ndarray:
    n = D.shape[0]
    J = np.eye(n) - 1.0 / n
    B = -0.5 * J @ (D**2) @ J
    return _top_eigen_coords(B, b, "mds")[0]


def isomap(points, n_neighbors: int, b: int) -> np.ndarray:
    P = np.asarray(points, dtype=np.float64)
    n = P.shape[0]
    if not 1 <= n_neighbors < n:
        raise ConfigError(f"n_neighbors must lie in [1, {n})")
    G, D = knn_graph(P, n_neighbors)
    G = _bridge_components(G, D)
    geo = shortest_path(G, method="D", directed=False)
    return classical_mds(geo, b)


def lle_weights(points, n_neighbors: int, reg: float = LLE_REG):
    """Reconstruction weights ``W`` (n x n, rows sum to 1) of each point from its k neighbors."""
    P = np.asarray(points, dtype=np.float64)
    n = P.shape[0]
    D = squareform(pdist(P))
    W = np.zeros((n, n))
    ones = np.ones(n_neighbors)
    for i in range(n):
        order = np.argsort(D[i], kind="stable")
        nbrs = np.array([j for j in order if j != i][:n_neighbors])
        Z = P[nbrs] - P[i]
        G = Z @ Z.T
        r = reg
        for attempt in range(4):
            Gr = G + np.eye(n_neighbors) * r * np.trace(G) / n_neighbors
            if np.linalg.matrix_rank(Gr) == n_neighbors:
                break
            if attempt == 3:
                raise NumericError(f"LLE: singular local Gram matrix at point {i}")
            r *= 10
        w = np.linalg.solve(Gr, ones)
        W[i, nbrs] = w / w.sum()
    return W


def lle(points, n_neighbors: int, b: int, reg: float = LLE_REG) -> np.ndarray:
    P = np.asarray(points, dtype=np.float64)
    n = P.shape[0]
    if not 1 <= n_neighbors < n:
        raise ConfigError(f"n_neighbors must lie in [1, {n})")
    if b >= n:
        raise ConfigError(f"LLE yields at most n-1={n - 1} coordinates, requested b={b}")
    W = lle_weights(P, n_neighbors, reg)
    A = np.eye(n) - W
    evals, evecs = np.linalg.eigh(A.T @ A)
    # skip the bottom (constant) eigenvector
    return _fix_signs(evecs[:, 1:b + 1])


def embed_anchors(centers, spec: EmbedderSpec, b: int) -> AnchorEmbedding:
    """Embed the anchor rows into ``b`` dimensions with the embedder named in ``spec``."""
    P = np.asarray(centers, dtype=np.float64)
    n = P.shape[0]
    if not 1 <= b <= n:
        raise ConfigError(f"code length b={b} must lie in [1, n={n}] (bounded by the number of anchors)")
    if n < 2 or np.allclose(P, P[0], rtol=0, atol=0):
        raise DataError("degenerate input: all anchors identical")
    if spec.kind == "kernel_pca":
        bw = median_distance(P) if spec.bandwidth == "median" else float(spec.bandwidth)
        M = kernel_pca(P, bw, b)
    elif spec.kind == "isomap":
        M = isomap(P, spec.n_neighbors, b)
    elif spec.kind == "lle":
        if b == n:
            warnings.warn("LLE provides n-1 coordinates; padding the last column with zeros",
                          RuntimeWarning, stacklevel=2)
            M = np.hstack([lle(P, spec.n_neighbors, n - 1, spec.lle_reg), np.zeros((n, 1))])
        else:
            M = lle(P, spec.n_neighbors, b, spec.lle_reg)
    else:
        raise ConfigError(f"embedder {spec.kind!r} cannot be computed; load it with load_precomputed")
    return AnchorEmbedding(M, spec)
