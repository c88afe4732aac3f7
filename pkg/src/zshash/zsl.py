"""Closed-form attribute predictor, unseen-class anchors and unseen-instance hashing."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve

from .embedding import AnchorEmbedding
from .errors import ConfigError, DataError, NumericError
from .hashing import HashCode, HashCodeSet, HashParams, _boost_rows, binarize, binarize_rows, map_chunks

SHIFT_EPS = 1e-6

# (gamma, lambda) tuned per dataset
PRESETS = {
    "awa": (10.0, 100.0),
    "sun": (0.01, 1.0),
}


@dataclass(frozen=True)
class ZslHyperparams:
    gamma: float = PRESETS["awa"][0]
    lam: float = PRESETS["awa"][1]

    def __post_init__(self):
        if self.gamma < 0 or self.lam < 0:
            raise ConfigError("gamma and lambda must be >= 0")

    @property
    def alpha(self) -> float:
        return self.gamma * self.lam

    @classmethod
    def preset(cls, name: str) -> "ZslHyperparams":
        try:
            return cls(*PRESETS[name.lower()])
        except KeyError:
            raise ConfigError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}") from None


@dataclass(frozen=True)
class ZslModel:
    V: np.ndarray
    hyper: ZslHyperparams

    def __post_init__(self):
        V = np.array(self.V, dtype=np.float64)
        if V.ndim != 2 or not np.all(np.isfinite(V)):
            raise NumericError("V must be a finite 2-D matrix")
        V.setflags(write=False)
        object.__setattr__(self, "V", V)

    def save(self, directory, stem: str = "zsl") -> None:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        np.savetxt(directory / f"{stem}_V.csv", self.V, fmt="%.17g", delimiter=",")
        meta = {"gamma": self.hyper.gamma, "lambda": self.hyper.lam}
        (directory / f"{stem}.json").write_text(json.dumps(meta, indent=2) + "\n")

    @classmethod
    def load(cls, directory, stem: str = "zsl") -> "ZslModel":
        directory = Path(directory)
        meta = json.loads((directory / f"{stem}.json").read_text())
        V = np.loadtxt(directory / f"{stem}_V.csv", delimiter=",", ndmin=2)
        return cls(V, ZslHyperparams(meta["gamma"], meta["lambda"]))


def _as_pm1(Y, n_classes: int | None = None) -> np.ndarray:
    Y = np.asarray(Y)
    if Y.ndim == 1:
        n = int(Y.max()) + 1 if n_classes is None else n_classes
        out = -np.ones((Y.size, n))
        out[np.arange(Y.size), Y.astype(np.int64)] = 1.0
        return out
    return Y.astype(np.float64)


def _spd_factor(A: np.ndarray, what: str):
    try:
        return cho_factor(A, lower=True, check_finite=True)
    except LinAlgError as exc:
        raise NumericError(f"singular system: {what} is not positive definite; raise the regularizer") from exc


def fit_eszsl(X, Y, S, gamma: float, lam: float) -> ZslModel:
    """Closed-form V = (X'X + gamma I)^-1 X'Y S' (SS' + lambda I)^-1.

    ``Y`` is either the N x n matrix in {-1, +1} or a label vector.
    """
    X = np.asarray(X, dtype=np.float64)
    S = np.asarray(S, dtype=np.float64)
    Y = _as_pm1(Y, S.shape[1])
    if X.shape[0] != Y.shape[0] or Y.shape[1] != S.shape[1]:
        raise DataError(f"shape mismatch: X {X.shape}, Y {Y.shape}, S {S.shape}")
    hyper = ZslHyperparams(gamma, lam)
    d, a = X.shape[1], S.shape[0]
    A = _spd_factor(X.T @ X + gamma * np.eye(d), "X'X + gamma I")
    B = _spd_factor(S @ S.T + lam * np.eye(a), "SS' + lambda I")
    left = cho_solve(A, X.T @ Y @ S.T)
    # right-multiply by B^-1 using symmetry: (B^-1 L')' = L B^-1
    V = cho_solve(B, left.T).T
    return ZslModel(V, hyper)


def eszsl_objective(V, X, Y, S, gamma: float, lam: float) -> float:
    V, X, S = (np.asarray(m, dtype=np.float64) for m in (V, X, S))
    Y = _as_pm1(Y, S.shape[1])
    if V.shape != (X.shape[1], S.shape[0]) or Y.shape != (X.shape[0], S.shape[1]):
        raise DataError("shape mismatch")
    XV = X @ V
    VS = V @ S
    return float(
        np.sum((XV @ S - Y) ** 2)
        + gamma * np.sum(VS**2)
        + lam * np.sum(XV**2)
        + gamma * lam * np.sum(V**2)
    )


def eszsl_gradient(V, X, Y, S, gamma: float, lam: float) -> np.ndarray:
    V, X, S = (np.asarray(m, dtype=np.float64) for m in (V, X, S))
    Y = _as_pm1(Y, S.shape[1])
    XtX = X.T @ X
    SSt = S @ S.T
    return 2 * (
        X.T @ (X @ V @ S - Y) @ S.T
        + gamma * V @ SSt
        + lam * XtX @ V
        + gamma * lam * V
    )


def score_unseen(x, model: ZslModel, S_unseen) -> np.ndarray:
    """Compatibility ``x V S'`` of an instance (or rows of a matrix) with each unseen class."""
    x = np.asarray(x, dtype=np.float64)
    S_unseen = np.asarray(S_unseen, dtype=np.float64)
    if x.shape[-1] != model.V.shape[0] or S_unseen.shape[0] != model.V.shape[1]:
        raise DataError(
            f"shape mismatch: x {x.shape}, V {model.V.shape}, unseen signatures {S_unseen.shape}"
        )
    return x @ model.V @ S_unseen


def cosine_class_similarity(a_i, a_j) -> float:
    a_i = np.asarray(a_i, dtype=np.float64)
    a_j = np.asarray(a_j, dtype=np.float64)
    ni, nj = np.linalg.norm(a_i), np.linalg.norm(a_j)
    if ni == 0 or nj == 0:
        raise DataError("zero-norm attribute vector")
    return float(a_i @ a_j / (ni * nj))


def synthesize_unseen_anchor(a_new, S_seen, M, top_s: Optional[int] = None) -> np.ndarray:
    """Cosine-similarity-weighted average of seen-class embeddings.

    Row q of ``M`` must belong to the class of column q of ``S_seen``.
    All seen classes contribute unless ``top_s`` restricts to the most similar ones.
    """
    a_new = np.asarray(a_new, dtype=np.float64)
    S_seen = np.asarray(S_seen, dtype=np.float64)
    Mm = np.asarray(getattr(M, "M", M), dtype=np.float64)
    if S_seen.shape[1] != Mm.shape[0]:
        raise DataError(f"{S_seen.shape[1]} seen signatures vs {Mm.shape[0]} embedding rows")
    if a_new.shape != (S_seen.shape[0],):
        raise DataError("attribute dimension mismatch")
    w = np.array([cosine_class_similarity(a_new, S_seen[:, q]) for q in range(S_seen.shape[1])])
    if top_s is not None and top_s < w.size:
        drop = np.argsort(-w, kind="stable")[top_s:]
        w[drop] = 0.0
    total = w.sum()
    if total <= 0:
        raise NumericError("unseen signature has zero similarity with every seen class")
    return (w @ Mm) / total


@dataclass(frozen=True)
class ExtendedAnchorSet:
    base: AnchorEmbedding
    unseen_embeddings: np.ndarray
    unseen_class_ids: np.ndarray

    def __post_init__(self):
        U = np.array(self.unseen_embeddings, dtype=np.float64).reshape(-1, self.base.code_length)
        ids = np.array(self.unseen_class_ids, dtype=np.int64).reshape(-1)
        if ids.size != U.shape[0]:
            raise DataError("one class id per unseen embedding required")
        U.setflags(write=False)
        ids.setflags(write=False)
        object.__setattr__(self, "unseen_embeddings", U)
        object.__setattr__(self, "unseen_class_ids", ids)

    @property
    def n_unseen(self) -> int:
        return self.unseen_embeddings.shape[0]

    @property
    def all_embeddings(self) -> np.ndarray:
        return np.vstack([self.base.M, self.unseen_embeddings])

    def unseen_codes(self) -> HashCodeSet:
        return binarize_rows(self.unseen_embeddings) if self.n_unseen else HashCodeSet(
            np.zeros((0, (self.base.code_length + 7) // 8), np.uint8), self.base.code_length)

    def save(self, directory, stem: str = "embedding_extended") -> None:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        np.savetxt(directory / f"{stem}.csv", self.all_embeddings, fmt="%.17g", delimiter=",")
        manifest = {
            "n_base": self.base.n_anchors,
            "unseen_class_ids": self.unseen_class_ids.tolist(),
        }
        (directory / f"{stem}.json").write_text(json.dumps(manifest, indent=2) + "\n")

    @classmethod
    def load(cls, directory, base: AnchorEmbedding, stem: str = "embedding_extended") -> "ExtendedAnchorSet":
        directory = Path(directory)
        manifest = json.loads((directory / f"{stem}.json").read_text())
        rows = np.loadtxt(directory / f"{stem}.csv", delimiter=",", ndmin=2)
        n_base = manifest["n_base"]
        if n_base != base.n_anchors:
            raise DataError("extended anchor file does not match the base embedding")
        return cls(base, rows[n_base:], manifest["unseen_class_ids"])


def extend_anchor_set(
    base: AnchorEmbedding,
    S_seen,
    S_unseen,
    unseen_class_ids=None,
    class_of_anchor=None,
    top_s: Optional[int] = None,
) -> ExtendedAnchorSet:
    """Synthesize one embedding per unseen signature column, in column order.

    ``class_of_anchor`` maps base embedding rows to seen-signature columns
    (identity when omitted).
    """
    S_seen = np.asarray(S_seen, dtype=np.float64)
    S_unseen = np.asarray(S_unseen, dtype=np.float64).reshape(S_seen.shape[0], -1)
    M = base.M
    if class_of_anchor is not None:
        coa = np.asarray(class_of_anchor, dtype=np.int64)
        by_class = np.empty_like(M)
        by_class[coa] = M
        M = by_class
    n_u = S_unseen.shape[1]
    if unseen_class_ids is None:
        unseen_class_ids = np.arange(n_u)
    rows = [synthesize_unseen_anchor(S_unseen[:, i], S_seen, M, top_s) for i in range(n_u)]
    U = np.array(rows).reshape(n_u, base.code_length)
    return ExtendedAnchorSet(base, U, unseen_class_ids)


def shifted_scores(scores, s: int) -> np.ndarray:
    """Keep the top-s scores and make them strictly positive, preserving their order.

    If any kept score is <= 0 the kept scores are shifted by ``eps - min``.
    Non-kept entries become 0.
    """
    W = np.atleast_2d(np.asarray(scores, dtype=np.float64))
    s = min(s, W.shape[1])
    order = np.argsort(-W, axis=1, kind="stable")[:, :s]
    kept = np.take_along_axis(W, order, axis=1)
    low = kept.min(axis=1, keepdims=True)
    kept = np.where(low <= 0, kept - low + SHIFT_EPS, kept)
    out = np.zeros_like(W)
    np.put_along_axis(out, order, kept, axis=1)
    return out if np.ndim(scores) > 1 else out[0]


def unseen_weights(scores, s: int, omega: float) -> np.ndarray:
    """Score vector(s) -> sparse convex weights over unseen anchors (s is capped at n_u)."""
    W = np.atleast_2d(np.asarray(scores, dtype=np.float64))
    s = min(s, W.shape[1])
    out = _boost_rows(shifted_scores(W, s), s, omega)
    return out if np.ndim(scores) > 1 else out[0]


def hash_unseen_instance(x_u, model: ZslModel, ext: ExtendedAnchorSet, S_unseen, params: HashParams) -> HashCode:
    if ext.n_unseen < 1:
        raise DataError("no unseen classes to hash against")
    scores = score_unseen(x_u, model, S_unseen)
    if scores.ndim != 1:
        raise DataError("hash_unseen_instance takes a single feature vector")
    w = unseen_weights(scores, params.s, params.omega)
    return binarize(w @ ext.unseen_embeddings)


def embed_unseen(X_u, model: ZslModel, ext: ExtendedAnchorSet, S_unseen, params: HashParams,
                 threads: int = 1) -> np.ndarray:
    if ext.n_unseen < 1:
        raise DataError("no unseen classes to hash against")
    X_u = np.atleast_2d(np.asarray(X_u, dtype=np.float64))
    if X_u.shape[1] != model.V.shape[0]:
        raise DataError(f"feature dimension {X_u.shape[1]} does not match model ({model.V.shape[0]})")

    def run(block):
        return unseen_weights(score_unseen(block, model, S_unseen), params.s, params.omega) @ ext.unseen_embeddings

    return map_chunks(run, X_u, threads)


def hash_unseen(X_u, model: ZslModel, ext: ExtendedAnchorSet, S_unseen, params: HashParams,
                threads: int = 1) -> HashCodeSet:
    return binarize_rows(embed_unseen(X_u, model, ext, S_unseen, params, threads))
