"""Inductive hashing of seen-class instances against the anchor embedding."""

from __future__ import annotations

import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Union

import numpy as np
from scipy.spatial.distance import cdist

from .errors import ConfigError, DataError, NumericError

MAGIC = b"ZSH1"
_HEADER = struct.Struct("<4sII")
DEFAULT_S = 5
DEFAULT_OMEGA = 5.0
SIGMA_SAMPLE = 1000
CHUNK = 4096


@dataclass(frozen=True)
class HashCode:
    """One b-bit code, packed little-endian (bit j lives in byte j // 8 at position j % 8).

    A set bit means +1, a clear bit -1.
    """

    packed: np.ndarray
    n_bits: int

    def __post_init__(self):
        packed = np.ascontiguousarray(self.packed, dtype=np.uint8).reshape(-1)
        if packed.size != (self.n_bits + 7) // 8:
            raise DataError("packed size does not match code length")
        if self.n_bits % 8 and packed[-1] >> (self.n_bits % 8):
            raise DataError("padding bits must be zero")
        packed.setflags(write=False)
        object.__setattr__(self, "packed", packed)

    @classmethod
    def from_signs(cls, signs) -> "HashCode":
        signs = np.asarray(signs).reshape(-1)
        return cls(np.packbits(signs > 0, bitorder="little"), signs.size)

    def to_signs(self) -> np.ndarray:
        bits = np.unpackbits(self.packed, count=self.n_bits, bitorder="little")
        return bits.astype(np.int8) * 2 - 1

    def __len__(self) -> int:
        return self.n_bits

    def __eq__(self, other):
        if not isinstance(other, HashCode):
            return NotImplemented
        return self.n_bits == other.n_bits and bool(np.array_equal(self.packed, other.packed))

    def __hash__(self):
        return hash((self.n_bits, self.packed.tobytes()))


@dataclass(frozen=True)
class HashCodeSet:
    """N codes of equal length stored as an N x ceil(b/8) uint8 array."""

    packed: np.ndarray
    n_bits: int

    def __post_init__(self):
        nbytes = (self.n_bits + 7) // 8
        packed = np.ascontiguousarray(self.packed, dtype=np.uint8).reshape(-1, nbytes) if nbytes else \
            np.zeros((0, 0), dtype=np.uint8)
        if self.n_bits % 8 and packed.size and np.any(packed[:, -1] >> (self.n_bits % 8)):
            raise DataError("padding bits must be zero")
        packed.setflags(write=False)
        object.__setattr__(self, "packed", packed)

    @classmethod
    def from_signs(cls, signs) -> "HashCodeSet":
        signs = np.atleast_2d(np.asarray(signs))
        return cls(np.packbits(signs > 0, axis=1, bitorder="little"), signs.shape[1])

    @classmethod
    def from_codes(cls, codes) -> "HashCodeSet":
        codes = list(codes)
        if not codes:
            raise DataError("empty code list")
        b = codes[0].n_bits
        if any(c.n_bits != b for c in codes):
            raise DataError("code lengths differ")
        return cls(np.stack([c.packed for c in codes]), b)

    def to_signs(self) -> np.ndarray:
        bits = np.unpackbits(self.packed, axis=1, count=self.n_bits, bitorder="little")
        return bits.astype(np.int8) * 2 - 1

    def __len__(self) -> int:
        return self.packed.shape[0]

    def __getitem__(self, idx):
        if isinstance(idx, (int, np.integer)):
            return HashCode(self.packed[idx], self.n_bits)
        return HashCodeSet(self.packed[idx], self.n_bits)

    def __iter__(self):
        for i in range(len(self)):
            yield self[i]

    def __eq__(self, other):
        if not isinstance(other, HashCodeSet):
            return NotImplemented
        return self.n_bits == other.n_bits and bool(np.array_equal(self.packed, other.packed))

    def concat(self, other: "HashCodeSet") -> "HashCodeSet":
        if other.n_bits != self.n_bits:
            raise DataError("code lengths differ")
        return HashCodeSet(np.vstack([self.packed, other.packed]), self.n_bits)

    def save(self, path) -> None:
        with open(path, "wb") as fh:
            fh.write(_HEADER.pack(MAGIC, len(self), self.n_bits))
            fh.write(self.packed.tobytes())

    @classmethod
    def load(cls, path) -> "HashCodeSet":
        raw = Path(path).read_bytes()
        if len(raw) < _HEADER.size:
            raise DataError(f"{path}: truncated header")
        magic, n, b = _HEADER.unpack_from(raw)
        if magic != MAGIC:
            raise DataError(f"{path}: bad magic {magic!r}")
        nbytes = (b + 7) // 8
        body = raw[_HEADER.size:]
        if len(body) != n * nbytes:
            raise DataError(f"{path}: expected {n * nbytes} payload bytes, found {len(body)}")
        return cls(np.frombuffer(body, dtype=np.uint8).reshape(n, nbytes), b)

    def save_csv(self, path) -> None:
        np.savetxt(path, self.to_signs(), fmt="%d", delimiter=",", newline="\n")


@dataclass(frozen=True)
class HashParams:
    sigma: Union[float, str] = "auto"
    s: int = DEFAULT_S
    omega: float = DEFAULT_OMEGA

    def __post_init__(self):
        if isinstance(self.sigma, str) and self.sigma != "auto":
            object.__setattr__(self, "sigma", float(self.sigma))
        if not isinstance(self.sigma, str) and not self.sigma > 0:
            raise ConfigError("sigma must be > 0")
        if self.s < 1:
            raise ConfigError("s must be >= 1")
        if not self.omega >= 1:
            raise ConfigError("omega must be >= 1")

    def check(self, n_anchors: int) -> None:
        if self.s > n_anchors:
            raise ConfigError(f"s={self.s} exceeds the number of anchors ({n_anchors})")


def auto_sigma(X, centers, max_samples: int = SIGMA_SAMPLE) -> float:
    """sqrt(2) times the median distance from (up to ``max_samples``) instances to their nearest anchor.

    Instances are sampled at evenly spaced indices. Falls back to the median
    inter-anchor distance when every sampled instance sits on an anchor.
    """
    X = np.asarray(X, dtype=np.float64)
    idx = np.unique(np.linspace(0, X.shape[0] - 1, min(X.shape[0], max_samples)).round().astype(int))
    nearest = cdist(X[idx], centers).min(axis=1)
    sigma = float(np.median(nearest)) * np.sqrt(2.0)
    if sigma <= 0:
        d = cdist(centers, centers)
        sigma = float(np.median(d[np.triu_indices_from(d, 1)]))
    if not sigma > 0:
        raise NumericError("cannot derive sigma: all anchors and instances coincide")
    return sigma


def rbf_weights(x, anchors, sigma: float) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    anchors = np.asarray(anchors, dtype=np.float64)
    if not sigma > 0:
        raise ConfigError("sigma must be > 0")
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(anchors))):
        raise DataError("non-finite input")
    d2 = np.sum((anchors - x) ** 2, axis=1)
    return np.exp(-d2 / sigma**2)


def _boost_rows(W: np.ndarray, s: int, omega: float) -> np.ndarray:
    # truncate to top s (ties -> lower index), scale rank i by omega**-i, renormalize
    n = W.shape[1]
    if s > n:
        raise ConfigError(f"s={s} exceeds the number of weights ({n})")
    order = np.argsort(-W, axis=1, kind="stable")[:, :s]
    kept = np.take_along_axis(W, order, axis=1) * omega ** -np.arange(1.0, s + 1)
    total = kept.sum(axis=1, keepdims=True)
    if np.any(total <= 0):
        raise NumericError("all-zero weights")
    out = np.zeros_like(W, dtype=np.float64)
    np.put_along_axis(out, order, kept / total, axis=1)
    return out


def top_s_boost_renormalize(weights, s: int, omega: float) -> np.ndarray:
    w = np.asarray(weights, dtype=np.float64)
    if np.any(w < 0):
        raise DataError("weights must be nonnegative")
    return _boost_rows(w[None, :], s, omega)[0]


def inductive_embed(sparse_weights, M) -> np.ndarray:
    """Weighted average of anchor embeddings; weights must already sum to one."""
    w = np.asarray(sparse_weights, dtype=np.float64)
    M = _as_matrix(M)
    if w.shape[-1] != M.shape[0]:
        raise DataError(f"weight length {w.shape[-1]} does not match {M.shape[0]} anchor embeddings")
    if np.any(np.abs(w.sum(axis=-1) - 1.0) > 1e-9):
        raise DataError("weights must sum to 1")
    return w @ M


def binarize(m) -> HashCode:
    m = np.asarray(m, dtype=np.float64)
    return HashCode.from_signs(np.where(m >= 0, 1, -1))


def binarize_rows(Mx) -> HashCodeSet:
    Mx = np.atleast_2d(np.asarray(Mx, dtype=np.float64))
    return HashCodeSet.from_signs(Mx >= 0)


def anchor_hash_codes(M) -> HashCodeSet:
    return binarize_rows(_as_matrix(M))


def _as_matrix(M) -> np.ndarray:
    return np.asarray(getattr(M, "M", M), dtype=np.float64)


def _centers(anchors) -> np.ndarray:
    return np.asarray(getattr(anchors, "centers", anchors), dtype=np.float64)


def _resolve_sigma(params: HashParams, sigma) -> float:
    sigma = params.sigma if sigma is None else sigma
    if isinstance(sigma, str):
        raise ConfigError("sigma='auto' must be resolved against training data first (see auto_sigma)")
    return float(sigma)


def hash_seen_instance(x, anchors, M, params: HashParams, sigma=None) -> HashCode:
    """Hash one instance: RBF weights -> top-s boost -> weighted embedding -> sign."""
    centers = _centers(anchors)
    Mm = _as_matrix(M)
    params.check(centers.shape[0])
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (centers.shape[1],):
        raise DataError(f"feature dimension {x.shape} does not match anchors ({centers.shape[1]})")
    sig = _resolve_sigma(params, sigma)
    w = rbf_weights(x, centers, sig)
    if w.max() == 0.0:
        # far from every anchor: rescale (the renormalization absorbs it)
        d2 = np.sum((centers - x) ** 2, axis=1)
        w = np.exp(-(d2 - d2.min()) / sig**2)
    return binarize(inductive_embed(top_s_boost_renormalize(w, params.s, params.omega), Mm))


def map_chunks(fn, X: np.ndarray, threads: int = 1, chunk: int = CHUNK) -> np.ndarray:
    """Apply a row-wise ``fn`` over row chunks of ``X``; output order follows input order."""
    pieces = [X[i:i + chunk] for i in range(0, X.shape[0], chunk)] or [X]
    if threads > 1 and len(pieces) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(fn, pieces))
    else:
        results = [fn(p) for p in pieces]
    return np.vstack(results)


def embed_seen(X, anchors, M, params: HashParams, sigma=None, threads: int = 1) -> np.ndarray:
    """Real-valued code-space embeddings (N x b) for a batch of seen-class instances."""
    centers = _centers(anchors)
    Mm = _as_matrix(M)
    params.check(centers.shape[0])
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    if X.shape[1] != centers.shape[1]:
        raise DataError(f"feature dimension {X.shape[1]} does not match anchors ({centers.shape[1]})")
    if not np.all(np.isfinite(X)):
        raise DataError("non-finite input")
    sig = _resolve_sigma(params, sigma)

    def run(block):
        d2 = cdist(block, centers, "sqeuclidean")
        W = np.exp(-d2 / sig**2)
        under = W.max(axis=1) == 0.0
        if under.any():
            W[under] = np.exp(-(d2[under] - d2[under].min(axis=1, keepdims=True)) / sig**2)
        return _boost_rows(W, params.s, params.omega) @ Mm

    return map_chunks(run, X, threads)


def hash_seen(X, anchors, M, params: HashParams, sigma=None, threads: int = 1) -> HashCodeSet:
    return binarize_rows(embed_seen(X, anchors, M, params, sigma, threads))
