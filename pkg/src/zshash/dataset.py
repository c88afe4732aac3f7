"""Data ingestion, synthetic generation and the splits used by the protocol."""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .errors import ConfigError, DataError


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr = np.array(arr, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class FeatureMatrix:
    """N x d matrix of instance features, one row per instance."""

    data: np.ndarray

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float64)
        if data.ndim != 2 or data.shape[0] < 1 or data.shape[1] < 1:
            raise DataError(f"features must be a non-empty 2-D matrix, got shape {data.shape}")
        if not np.all(np.isfinite(data)):
            raise DataError("non-finite feature")
        object.__setattr__(self, "data", _frozen(data))

    @property
    def n_instances(self) -> int:
        return self.data.shape[0]

    @property
    def dim(self) -> int:
        return self.data.shape[1]

    def __len__(self) -> int:
        return self.n_instances


@dataclass(frozen=True)
class LabelVector:
    labels: np.ndarray
    n_classes: int

    def __post_init__(self):
        labels = np.asarray(self.labels)
        if labels.ndim != 1:
            raise DataError("labels must be a 1-D vector")
        if labels.size and not np.issubdtype(labels.dtype, np.integer):
            if not np.all(labels == np.round(labels)):
                raise DataError("labels must be integers")
        labels = labels.astype(np.int64)
        if labels.size and (labels.min() < 0 or labels.max() >= self.n_classes):
            raise DataError("label out of range")
        object.__setattr__(self, "labels", _frozen(labels))

    def __len__(self) -> int:
        return self.labels.shape[0]

    def one_hot(self) -> np.ndarray:
        """Return the N x n matrix in {-1, +1} with +1 at each instance's class."""
        y = -np.ones((len(self), self.n_classes))
        y[np.arange(len(self)), self.labels] = 1.0
        return y

    def counts(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.n_classes)


@dataclass(frozen=True)
class SignatureMatrix:
    """a x n attribute matrix; column j describes class j."""

    data: np.ndarray

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float64)
        if data.ndim != 2:
            raise DataError(f"signatures must be a 2-D matrix, got shape {data.shape}")
        if not np.all(np.isfinite(data)) or data.min(initial=0.0) < 0.0 or data.max(initial=0.0) > 1.0:
            raise DataError("signature entry outside [0,1]")
        if data.shape[1] and np.any(np.all(data == 0.0, axis=0)):
            raise DataError("signature column with no nonzero attribute")
        object.__setattr__(self, "data", _frozen(data))

    @property
    def attr_dim(self) -> int:
        return self.data.shape[0]

    @property
    def n_classes(self) -> int:
        return self.data.shape[1]


@dataclass(frozen=True)
class DatasetBundle:
    features: FeatureMatrix
    labels: LabelVector
    signatures: SignatureMatrix
    class_names: Optional[tuple] = None

    def __post_init__(self):
        if self.labels.n_classes != self.signatures.n_classes:
            raise DataError(
                f"dimension mismatch: {self.labels.n_classes} label classes vs "
                f"{self.signatures.n_classes} signature columns"
            )
        if self.features.n_instances != len(self.labels):
            raise DataError(
                f"dimension mismatch: {self.features.n_instances} feature rows vs "
                f"{len(self.labels)} labels"
            )
        if self.class_names is not None:
            names = tuple(self.class_names)
            if len(names) != self.n_classes:
                raise DataError("class_names length does not match number of classes")
            object.__setattr__(self, "class_names", names)

    @property
    def X(self) -> np.ndarray:
        return self.features.data

    @property
    def y(self) -> np.ndarray:
        return self.labels.labels

    @property
    def S(self) -> np.ndarray:
        return self.signatures.data

    @property
    def n_classes(self) -> int:
        return self.labels.n_classes

    def __len__(self) -> int:
        return self.features.n_instances


@dataclass(frozen=True)
class SeenUnseenSplit:
    """Class-disjoint partition. Each side uses local labels; the id arrays map local -> original."""

    seen: DatasetBundle
    unseen: DatasetBundle
    seen_class_ids: np.ndarray = field(default=None)
    unseen_class_ids: np.ndarray = field(default=None)

    def __post_init__(self):
        seen_ids = np.asarray(self.seen_class_ids, dtype=np.int64)
        unseen_ids = np.asarray(self.unseen_class_ids, dtype=np.int64)
        if seen_ids.size != self.seen.n_classes or unseen_ids.size != self.unseen.n_classes:
            raise DataError("class id arrays do not match bundle class counts")
        if np.intersect1d(seen_ids, unseen_ids).size:
            raise DataError("seen and unseen class ids overlap")
        object.__setattr__(self, "seen_class_ids", _frozen(seen_ids))
        object.__setattr__(self, "unseen_class_ids", _frozen(unseen_ids))

    @property
    def n_seen(self) -> int:
        return self.seen.n_classes

    @property
    def n_unseen(self) -> int:
        return self.unseen.n_classes

    def merged(self) -> DatasetBundle:
        """Reassemble the original bundle (seen instances first) with original class ids."""
        n = self.n_seen + self.n_unseen
        sig = np.empty((self.seen.signatures.attr_dim, n))
        sig[:, self.seen_class_ids] = self.seen.S
        sig[:, self.unseen_class_ids] = self.unseen.S
        labels = np.concatenate([self.seen_class_ids[self.seen.y], self.unseen_class_ids[self.unseen.y]])
        names = None
        if self.seen.class_names is not None and self.unseen.class_names is not None:
            names = [None] * n
            for ids, bundle in ((self.seen_class_ids, self.seen), (self.unseen_class_ids, self.unseen)):
                for i, name in zip(ids, bundle.class_names):
                    names[i] = name
        return DatasetBundle(
            FeatureMatrix(np.vstack([self.seen.X, self.unseen.X])),
            LabelVector(labels, n),
            SignatureMatrix(sig),
            tuple(names) if names is not None else None,
        )


def standardize(X: np.ndarray) -> np.ndarray:
    """Per-dimension z-score; constant dimensions are only centered."""
    mu = X.mean(axis=0)
    sd = X.std(axis=0)
    sd[sd == 0] = 1.0
    return (X - mu) / sd


def _read_csv(path, dtype=float, ndmin=2, what="file"):
    path = Path(path)
    if not path.exists():
        raise DataError(f"{what} not found: {path}")
    try:
        return np.loadtxt(path, delimiter=",", dtype=dtype, ndmin=ndmin)
    except ValueError as exc:
        raise DataError(f"cannot parse {what} {path}: {exc}") from exc


def load_dataset(features_path, labels_path, signatures_path, standardize_features: bool = False) -> DatasetBundle:
    """Load and validate a features/labels/signatures CSV triple.

    Raw label values index signature columns. Classes are then renumbered
    densely in order of first appearance in the labels file; signature
    columns are permuted to match, and classes without instances are kept
    at the end in ascending original order. ``class_names`` records the
    original id of every class.
    """
    X = _read_csv(features_path, what="features")
    raw = _read_csv(labels_path, dtype=float, ndmin=1, what="labels")
    if raw.ndim != 1:
        raise DataError("labels file must contain one integer per row")
    if not np.all(np.isfinite(raw)) or not np.all(raw == np.round(raw)):
        raise DataError("labels must be integers")
    raw = raw.astype(np.int64)
    S = _read_csv(signatures_path, what="signatures")

    if not np.all(np.isfinite(X)):
        raise DataError("non-finite feature")
    if X.shape[0] != raw.shape[0]:
        raise DataError(f"dimension mismatch: {X.shape[0]} feature rows vs {raw.shape[0]} labels")
    n = S.shape[1]
    if raw.size and (raw.min() < 0 or raw.max() >= n):
        raise DataError(f"label out of range: labels must lie in [0, {n}) for {n} signature columns")

    _, first = np.unique(raw, return_index=True)
    appearing = raw[np.sort(first)]
    absent = np.setdiff1d(np.arange(n), appearing)
    order = np.concatenate([appearing, absent]).astype(np.int64)
    remap = np.empty(n, dtype=np.int64)
    remap[order] = np.arange(n)

    if standardize_features:
        X = standardize(X)
    return DatasetBundle(
        FeatureMatrix(X),
        LabelVector(remap[raw], n),
        SignatureMatrix(S[:, order]),
        tuple(str(c) for c in order),
    )


def write_dataset(bundle: DatasetBundle, directory) -> dict:
    """Write ``features.csv``, ``labels.csv`` and ``signatures.csv`` under ``directory``."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths = {
        "features": directory / "features.csv",
        "labels": directory / "labels.csv",
        "signatures": directory / "signatures.csv",
    }
    np.savetxt(paths["features"], bundle.X, fmt="%.17g", delimiter=",", newline="\n")
    np.savetxt(paths["labels"], bundle.y, fmt="%d", newline="\n")
    np.savetxt(paths["signatures"], bundle.S, fmt="%.17g", delimiter=",", newline="\n")
    return paths


def subset(bundle: DatasetBundle, class_ids: Sequence[int]) -> DatasetBundle:
    """Instances and signature columns of ``class_ids``, relabelled 0..len-1 in the given order."""
    class_ids = np.asarray(class_ids, dtype=np.int64)
    remap = np.full(bundle.n_classes, -1, dtype=np.int64)
    remap[class_ids] = np.arange(class_ids.size)
    mask = remap[bundle.y] >= 0
    names = None
    if bundle.class_names is not None:
        names = tuple(bundle.class_names[c] for c in class_ids)
    return DatasetBundle(
        FeatureMatrix(bundle.X[mask]) if mask.any() else _EmptyFeatures(bundle.features.dim),
        LabelVector(remap[bundle.y[mask]], class_ids.size),
        SignatureMatrix(bundle.S[:, class_ids]),
        names,
    )


class _EmptyFeatures(FeatureMatrix):
    # unseen classes may legitimately have signatures but no instances
    def __init__(self, dim):
        object.__setattr__(self, "data", _frozen(np.zeros((0, dim))))

    def __post_init__(self):
        pass


def split_seen_unseen(bundle: DatasetBundle, unseen_class_ids) -> SeenUnseenSplit:
    unseen = np.unique(np.asarray(list(unseen_class_ids), dtype=np.int64))
    if unseen.size == 0:
        raise ConfigError("unseen class set is empty")
    if unseen.min() < 0 or unseen.max() >= bundle.n_classes:
        raise ConfigError("unseen class id out of range")
    if unseen.size >= bundle.n_classes:
        raise ConfigError("unseen classes cover all classes; seen side would be empty")
    seen = np.setdiff1d(np.arange(bundle.n_classes), unseen)
    return SeenUnseenSplit(subset(bundle, seen), subset(bundle, unseen), seen, unseen)


def draw_unseen_classes(n_classes: int, n_unseen: int, seed: int) -> np.ndarray:
    if not 1 <= n_unseen < n_classes:
        raise ConfigError(f"n_unseen must lie in [1, {n_classes})")
    rng = np.random.default_rng(seed)
    return np.sort(rng.choice(n_classes, size=n_unseen, replace=False))


def split_query_database(codes, labels=None, query_fraction: float = 0.25, seed: int = 0):
    """Random query/database partition of ``len(codes)`` items.

    Returns ``(query_idx, database_idx)``, both sorted.
    """
    if not 0.0 < query_fraction < 1.0:
        raise ConfigError(f"query_fraction must lie in (0, 1), got {query_fraction}")
    n = len(codes)
    if labels is not None and len(labels) != n:
        raise DataError("labels do not match codes")
    perm = np.random.default_rng(seed).permutation(n)
    n_query = int(round(query_fraction * n))
    return np.sort(perm[:n_query]), np.sort(perm[n_query:])


def generate_synthetic(
    n_seen: int = 8,
    n_unseen: int = 2,
    per_class: int = 50,
    d: int = 32,
    a: int = 16,
    cluster_spread: float = 0.1,
    seed: int = 0,
) -> SeenUnseenSplit:
    """Gaussian clusters whose means are a fixed linear map of binary class signatures.

    Every unseen signature is a convex mixture of two seen signatures and
    its cluster sits at the same mixture of the two seen means. Seen classes
    get ids ``0..n_seen-1`` and unseen ``n_seen..n_seen+n_unseen-1``.
    """
    for name, val in (("n_seen", n_seen), ("n_unseen", n_unseen), ("per_class", per_class), ("d", d), ("a", a)):
        if val < 1:
            raise ConfigError(f"{name} must be >= 1")
    if d < n_seen:
        raise ConfigError(f"d={d} < n_seen={n_seen}: anchors would be linearly degenerate")
    if cluster_spread < 0:
        raise ConfigError("cluster_spread must be >= 0")
    if n_seen < 2 and n_unseen:
        raise ConfigError("need at least two seen classes to build unseen mixtures")
    rng = np.random.default_rng(seed)

    S_seen = np.zeros((a, n_seen))
    for j in range(n_seen):
        for _ in range(100):
            col = (rng.random(a) < 0.5).astype(float)
            if col.any() and not any(np.array_equal(col, S_seen[:, k]) for k in range(j)):
                break
        if not col.any():
            col[rng.integers(a)] = 1.0
        S_seen[:, j] = col

    W = rng.standard_normal((d, a))
    means_seen = (W @ S_seen).T

    pairs = list(itertools.combinations(range(n_seen), 2))
    chosen = rng.permutation(len(pairs))
    S_unseen = np.zeros((a, n_unseen))
    means_unseen = np.zeros((n_unseen, d))
    for u in range(n_unseen):
        i, j = pairs[chosen[u % len(pairs)]]
        t = rng.uniform(0.3, 0.7)
        S_unseen[:, u] = t * S_seen[:, i] + (1 - t) * S_seen[:, j]
        means_unseen[u] = t * means_seen[i] + (1 - t) * means_seen[j]

    def bundle(means, S):
        n = means.shape[0]
        y = np.repeat(np.arange(n), per_class)
        X = means[y] + cluster_spread * rng.standard_normal((y.size, d))
        return DatasetBundle(FeatureMatrix(X), LabelVector(y, n), SignatureMatrix(S))

    seen = bundle(means_seen, S_seen)
    unseen = bundle(means_unseen, S_unseen)
    return SeenUnseenSplit(
        seen, unseen, np.arange(n_seen), np.arange(n_seen, n_seen + n_unseen)
    )
