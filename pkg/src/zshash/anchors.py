"""Label-penalized k-means: one anchor per seen class."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.optimize import linear_sum_assignment
from scipy.spatial.distance import cdist

from .errors import ConfigError, DataError

log = logging.getLogger(__name__)

DEFAULT_BETA = 0.9
DEFAULT_MAX_ITER = 300
DEFAULT_TOL = 1e-7


@dataclass(frozen=True)
class AnchorSet:
    """Learned anchors.

    ``class_of_anchor[q]`` is the class bound to anchor ``q``;
    ``assignments[n]`` is the cluster of training instance ``n``.
    """

    centers: np.ndarray
    class_of_anchor: np.ndarray
    assignments: np.ndarray
    beta: float
    n_iter: int = 0
    objective_history: tuple = field(default=())

    def __post_init__(self):
        centers = np.array(self.centers, dtype=np.float64)
        coa = np.array(self.class_of_anchor, dtype=np.int64)
        k = centers.shape[0]
        if not np.all(np.isfinite(centers)):
            raise DataError("anchor centers must be finite")
        if coa.shape != (k,) or not np.array_equal(np.sort(coa), np.arange(k)):
            raise DataError("class_of_anchor must be a bijection over [0, n_anchors)")
        assignments = np.array(self.assignments, dtype=np.int64)
        if assignments.size and (assignments.min() < 0 or assignments.max() >= k):
            raise DataError("assignment index out of range")
        for name, arr in (("centers", centers), ("class_of_anchor", coa), ("assignments", assignments)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        object.__setattr__(self, "objective_history", tuple(float(v) for v in self.objective_history))

    @property
    def n_anchors(self) -> int:
        return self.centers.shape[0]

    @property
    def anchor_of_class(self) -> np.ndarray:
        inv = np.empty_like(self.class_of_anchor)
        inv[self.class_of_anchor] = np.arange(self.n_anchors)
        return inv

    def save(self, directory, stem: str = "anchors") -> None:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        np.savetxt(directory / f"{stem}.csv", self.centers, fmt="%.17g", delimiter=",")
        np.savetxt(directory / f"{stem}_assignments.csv", self.assignments, fmt="%d")
        meta = {
            "class_of_anchor": self.class_of_anchor.tolist(),
            "beta": self.beta,
            "iterations": self.n_iter,
            "objective_history": list(self.objective_history),
        }
        (directory / f"{stem}.json").write_text(json.dumps(meta, indent=2) + "\n")

    @classmethod
    def load(cls, directory, stem: str = "anchors") -> "AnchorSet":
        directory = Path(directory)
        meta = json.loads((directory / f"{stem}.json").read_text())
        centers = np.loadtxt(directory / f"{stem}.csv", delimiter=",", ndmin=2)
        assignments = np.loadtxt(directory / f"{stem}_assignments.csv", dtype=np.int64, ndmin=1)
        return cls(centers, meta["class_of_anchor"], assignments, meta["beta"],
                   meta["iterations"], tuple(meta["objective_history"]))


def penalized_objective(X, labels, centers, assignments, beta, squared=True) -> float:
    """Sum of (squared) distances to assigned centers plus ``beta`` per label disagreement."""
    diff = np.asarray(X) - np.asarray(centers)[assignments]
    dist = np.einsum("ij,ij->i", diff, diff)
    if not squared:
        dist = np.sqrt(dist)
    return float(dist.sum() + beta * np.count_nonzero(assignments != labels))


def farthest_point_init(X: np.ndarray, k: int, seed: int) -> np.ndarray:
    """Indices of ``k`` seed points: first uniform at random, then greedy max-min distance."""
    rng = np.random.default_rng(seed)
    idx = [int(rng.integers(X.shape[0]))]
    mind = np.sum((X - X[idx[0]]) ** 2, axis=1)
    for _ in range(1, k):
        nxt = int(np.argmax(mind))
        idx.append(nxt)
        mind = np.minimum(mind, np.sum((X - X[nxt]) ** 2, axis=1))
    return np.array(idx)


def class_means(X, labels, n_classes=None) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if n_classes is None:
        n_classes = int(labels.max()) + 1 if labels.size else 0
    counts = np.bincount(labels, minlength=n_classes)
    if counts.size > n_classes or np.any(counts == 0):
        missing = np.flatnonzero(counts[:n_classes] == 0).tolist()
        raise DataError(f"classes without instances: {missing}")
    sums = np.zeros((n_classes, X.shape[1]))
    np.add.at(sums, labels, X)
    return sums / counts[:, None]


def assign_anchors_to_classes(centers, means) -> np.ndarray:
    """Minimum-total-Euclidean-distance bijection; returns ``class_of_anchor``."""
    centers = np.asarray(centers, dtype=np.float64)
    means = np.asarray(means, dtype=np.float64)
    if centers.ndim != 2 or centers.shape != means.shape:
        raise DataError(f"dimension mismatch: centers {centers.shape} vs means {means.shape}")
    rows, cols = linear_sum_assignment(cdist(centers, means))
    out = np.empty(centers.shape[0], dtype=np.int64)
    out[rows] = cols
    return out


def penalized_kmeans(
    X,
    labels,
    beta: float = DEFAULT_BETA,
    max_iter: int = DEFAULT_MAX_ITER,
    tol: float = DEFAULT_TOL,
    seed: int = 0,
    n_classes: int | None = None,
) -> AnchorSet:
    """Fit ``n_s`` anchors by EM on squared distance plus a label-mismatch penalty.

    Cluster ``k`` is penalized against class ``k``. Centers start from
    farthest-point seeds, each handed to the class whose mean it matches
    best; an emptied cluster is reseeded at the mean of
    its class. Anchors are bound to classes afterwards by optimal matching
    against the class means.
    """
    X = np.asarray(X, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if X.ndim != 2 or X.shape[0] == 0:
        raise DataError("empty input")
    if beta < 0:
        raise ConfigError("beta must be >= 0")
    k = int(n_classes if n_classes is not None else labels.max() + 1)
    if k < 2:
        raise ConfigError("need at least two seen classes")
    if X.shape[0] < k:
        raise DataError(f"N_s={X.shape[0]} < n_s={k}")
    means = class_means(X, labels, k)

    seeds = X[farthest_point_init(X, k, seed)]
    # cluster k is penalized against class k, so start each class from the seed matched to it
    centers = np.empty_like(seeds)
    centers[assign_anchors_to_classes(seeds, means)] = seeds
    penalty = beta * (np.arange(k)[None, :] != labels[:, None])
    assignments = None
    history = []
    prev = np.inf
    n_iter = 0
    for n_iter in range(1, max_iter + 1):
        cost = cdist(X, centers, "sqeuclidean") + penalty
        new = np.argmin(cost, axis=1)
        changed = assignments is None or not np.array_equal(new, assignments)
        assignments = new
        counts = np.bincount(assignments, minlength=k)
        for c in range(k):
            if counts[c]:
                centers[c] = X[assignments == c].mean(axis=0)
            else:
                centers[c] = means[c]
        obj = penalized_objective(X, labels, centers, assignments, beta)
        history.append(obj)
        if not changed or (np.isfinite(prev) and prev - obj <= tol * abs(prev)):
            break
        prev = obj
    log.debug("penalized k-means stopped after %d iterations, objective %.6g", n_iter, history[-1])

    return AnchorSet(centers, assign_anchors_to_classes(centers, means), assignments, beta, n_iter, tuple(history))
