"""Experiment orchestration: configuration, training, persistence and the evaluation protocol."""

from __future__ import annotations

import configparser
import json
import logging
import time
from contextlib import contextmanager
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional

import numpy as np

from . import anchors as anchors_mod
from .anchors import AnchorSet, penalized_kmeans
from .dataset import (
    DatasetBundle,
    SeenUnseenSplit,
    draw_unseen_classes,
    generate_synthetic,
    load_dataset,
    split_query_database,
    split_seen_unseen,
)
from .embedding import AnchorEmbedding, EmbedderSpec, embed_anchors
from .errors import ConfigError, DataError
from .evaluation import (
    DEFAULT_RADIUS,
    anchor_assignment_accuracy,
    lookup_metrics,
    mean_average_precision,
)
from .hashing import HashCodeSet, HashParams, anchor_hash_codes, auto_sigma, hash_seen
from .zsl import ExtendedAnchorSet, ZslHyperparams, ZslModel, extend_anchor_set, fit_eszsl, hash_unseen

log = logging.getLogger(__name__)

SPLIT_MODES = ("fixed", "redraw")
RETRIEVAL_SETS = ("all", "seen", "unseen")


@dataclass(frozen=True)
class KMeansParams:
    beta: float = anchors_mod.DEFAULT_BETA
    max_iter: int = anchors_mod.DEFAULT_MAX_ITER
    tol: float = anchors_mod.DEFAULT_TOL
    seed: int = 0


@dataclass(frozen=True)
class EvalParams:
    radius: int = DEFAULT_RADIUS
    query_fraction: float = 0.25
    split_seed: int = 0
    retrieval_set: str = "all"
    empty_as_zero: bool = True

    def __post_init__(self):
        if self.radius < 0:
            raise ConfigError("radius must be >= 0")
        if not 0 < self.query_fraction < 1:
            raise ConfigError("query_fraction must lie in (0, 1)")
        if self.retrieval_set not in RETRIEVAL_SETS:
            raise ConfigError(f"retrieval_set must be one of {RETRIEVAL_SETS}")


@dataclass(frozen=True)
class DataParams:
    features: Optional[str] = None
    labels: Optional[str] = None
    signatures: Optional[str] = None
    unseen_classes: Optional[tuple] = None
    n_unseen: Optional[int] = None
    standardize: bool = False


@dataclass(frozen=True)
class SyntheticParams:
    n_seen: int = 8
    n_unseen: int = 2
    per_class: int = 50
    dim: int = 32
    attrs: int = 16
    spread: float = 0.1
    seed: int = 1


@dataclass(frozen=True)
class ExperimentConfig:
    code_length: int = 8
    sweep_code_lengths: tuple = ()
    embedder: EmbedderSpec = field(default_factory=EmbedderSpec)
    hash: HashParams = field(default_factory=HashParams)
    kmeans: KMeansParams = field(default_factory=KMeansParams)
    zsl: ZslHyperparams = field(default_factory=ZslHyperparams)
    eval: EvalParams = field(default_factory=EvalParams)
    n_trials: int = 1
    split_mode: str = "fixed"
    threads: int = 1
    data: Optional[DataParams] = None
    synthetic: Optional[SyntheticParams] = None

    def __post_init__(self):
        if self.code_length < 1 or any(b < 1 for b in self.sweep_code_lengths):
            raise ConfigError("code length must be >= 1")
        if self.n_trials < 1:
            raise ConfigError("n_trials must be >= 1")
        if self.split_mode not in SPLIT_MODES:
            raise ConfigError(f"split_mode must be one of {SPLIT_MODES}")
        if self.threads < 1:
            raise ConfigError("threads must be >= 1")

    @property
    def code_lengths(self) -> tuple:
        return tuple(self.sweep_code_lengths) or (self.code_length,)


# ---------------------------------------------------------------- config I/O

def _parse_bool(v: str) -> bool:
    v = v.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"not a boolean: {v!r}")


def _int_list(v: str) -> tuple:
    try:
        return tuple(int(x) for x in str(v).replace(" ", "").split(",") if x)
    except ValueError:
        raise ConfigError(f"expected comma-separated integers, got {v!r}") from None


def _get(sec, key, conv, default):
    if sec is None or key not in sec:
        return default
    try:
        return conv(sec[key])
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"[{sec.name}] {key}: {exc}") from None


def _number_or(keyword):
    def conv(v):
        v = str(v).strip()
        return keyword if v == keyword else float(v)
    return conv


_KNOWN = {
    "experiment": {"code_length", "n_trials", "split_mode", "threads"},
    "kmeans": {"beta", "max_iter", "tol", "seed"},
    "embedding": {"kind", "bandwidth", "n_neighbors", "lle_reg"},
    "hashing": {"sigma", "s", "omega"},
    "zsl": {"preset", "gamma", "lambda"},
    "eval": {"radius", "query_fraction", "split_seed", "retrieval_set", "empty_as_zero"},
    "data": {"features", "labels", "signatures", "unseen_classes", "n_unseen", "standardize"},
    "synthetic": {"n_seen", "n_unseen", "per_class", "dim", "attrs", "spread", "seed"},
}


def parse_config(text: str, base_dir=None) -> ExperimentConfig:
    """Parse the INI-style key/value config. Relative data paths resolve against ``base_dir``."""
    cp = configparser.ConfigParser(interpolation=None)
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}") from None
    for name in cp.sections():
        if name not in _KNOWN:
            raise ConfigError(f"unknown config section [{name}]")
        unknown = set(cp[name]) - _KNOWN[name]
        if unknown:
            raise ConfigError(f"unknown keys in [{name}]: {', '.join(sorted(unknown))}")
    sec = {name: cp[name] if cp.has_section(name) else None for name in _KNOWN}
    d = ExperimentConfig()

    bits = _get(sec["experiment"], "code_length", _int_list, (d.code_length,))
    if not bits:
        raise ConfigError("code_length is empty")
    ex = sec["experiment"]

    zs = sec["zsl"]
    zsl = ZslHyperparams.preset(zs["preset"]) if zs is not None and "preset" in zs else d.zsl
    zsl = ZslHyperparams(_get(zs, "gamma", float, zsl.gamma), _get(zs, "lambda", float, zsl.lam))

    data = None
    if sec["data"] is not None:
        ds = sec["data"]
        base = Path(base_dir) if base_dir is not None else Path(".")

        def path(v):
            p = Path(v)
            return str(p if p.is_absolute() else base / p)

        data = DataParams(
            _get(ds, "features", path, None),
            _get(ds, "labels", path, None),
            _get(ds, "signatures", path, None),
            _get(ds, "unseen_classes", _int_list, None),
            _get(ds, "n_unseen", int, None),
            _get(ds, "standardize", _parse_bool, False),
        )
    synthetic = None
    if sec["synthetic"] is not None:
        sy, ds_ = sec["synthetic"], SyntheticParams()
        synthetic = SyntheticParams(
            _get(sy, "n_seen", int, ds_.n_seen),
            _get(sy, "n_unseen", int, ds_.n_unseen),
            _get(sy, "per_class", int, ds_.per_class),
            _get(sy, "dim", int, ds_.dim),
            _get(sy, "attrs", int, ds_.attrs),
            _get(sy, "spread", float, ds_.spread),
            _get(sy, "seed", int, ds_.seed),
        )
    km, em, hs, ev = sec["kmeans"], sec["embedding"], sec["hashing"], sec["eval"]
    return ExperimentConfig(
        code_length=bits[0],
        sweep_code_lengths=bits if len(bits) > 1 else (),
        embedder=EmbedderSpec(
            _get(em, "kind", str, d.embedder.kind),
            _get(em, "bandwidth", _number_or("median"), d.embedder.bandwidth),
            _get(em, "n_neighbors", int, d.embedder.n_neighbors),
            _get(em, "lle_reg", float, d.embedder.lle_reg),
        ),
        hash=HashParams(
            _get(hs, "sigma", _number_or("auto"), d.hash.sigma),
            _get(hs, "s", int, d.hash.s),
            _get(hs, "omega", float, d.hash.omega),
        ),
        kmeans=KMeansParams(
            _get(km, "beta", float, d.kmeans.beta),
            _get(km, "max_iter", int, d.kmeans.max_iter),
            _get(km, "tol", float, d.kmeans.tol),
            _get(km, "seed", int, d.kmeans.seed),
        ),
        zsl=zsl,
        eval=EvalParams(
            _get(ev, "radius", int, d.eval.radius),
            _get(ev, "query_fraction", float, d.eval.query_fraction),
            _get(ev, "split_seed", int, d.eval.split_seed),
            _get(ev, "retrieval_set", str, d.eval.retrieval_set),
            _get(ev, "empty_as_zero", _parse_bool, d.eval.empty_as_zero),
        ),
        n_trials=_get(ex, "n_trials", int, d.n_trials),
        split_mode=_get(ex, "split_mode", str, d.split_mode),
        threads=_get(ex, "threads", int, d.threads),
        data=data,
        synthetic=synthetic,
    )


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    return parse_config(path.read_text(), base_dir=path.parent)


def config_to_text(cfg: ExperimentConfig) -> str:
    """Serialize back to the key/value format (round-trips through ``parse_config``)."""
    cp = configparser.ConfigParser(interpolation=None)
    cp["experiment"] = {
        "code_length": ",".join(str(b) for b in cfg.code_lengths),
        "n_trials": str(cfg.n_trials),
        "split_mode": cfg.split_mode,
        "threads": str(cfg.threads),
    }
    cp["kmeans"] = {k: repr(v) for k, v in vars(cfg.kmeans).items()}
    cp["embedding"] = {k: str(v) if isinstance(v, str) else repr(v) for k, v in cfg.embedder.to_dict().items()}
    cp["hashing"] = {k: str(v) if isinstance(v, str) else repr(v) for k, v in vars(cfg.hash).items()}
    cp["zsl"] = {"gamma": repr(cfg.zsl.gamma), "lambda": repr(cfg.zsl.lam)}
    cp["eval"] = {k: str(v) for k, v in vars(cfg.eval).items()}
    if cfg.data is not None:
        cp["data"] = {
            k: (",".join(map(str, v)) if isinstance(v, tuple) else str(v))
            for k, v in vars(cfg.data).items() if v is not None
        }
    if cfg.synthetic is not None:
        cp["synthetic"] = {k: repr(v) for k, v in vars(cfg.synthetic).items()}
    lines = []
    for name in cp.sections():
        lines.append(f"[{name}]")
        lines.extend(f"{k} = {v}" for k, v in cp[name].items())
        lines.append("")
    return "\n".join(lines)


def default_config_path() -> Path:
    return Path(__file__).parent / "configs" / "synthetic.cfg"


# ---------------------------------------------------------------- model

@contextmanager
def _timed(label: str):
    t0 = time.perf_counter()
    yield
    log.info("%s: %.6f s", label, time.perf_counter() - t0)


@dataclass(frozen=True)
class TrainedModel:
    anchors: AnchorSet
    embedding: AnchorEmbedding
    zsl: ZslModel
    config: ExperimentConfig
    sigma: float
    seen_signatures: np.ndarray

    def __post_init__(self):
        n, d = self.anchors.centers.shape
        if self.embedding.n_anchors != n:
            raise DataError("embedding rows do not match anchors")
        if self.zsl.V.shape != (d, self.seen_signatures.shape[0]):
            raise DataError("ZSL weights do not match feature/attribute dimensions")
        if self.seen_signatures.shape[1] != n:
            raise DataError("seen signatures do not match anchors")

    @property
    def hash_params(self) -> HashParams:
        return replace(self.config.hash, sigma=self.sigma)

    @property
    def feature_dim(self) -> int:
        return self.anchors.centers.shape[1]

    def save(self, directory) -> None:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        self.anchors.save(directory)
        self.embedding.save(directory)
        self.zsl.save(directory)
        np.savetxt(directory / "seen_signatures.csv", self.seen_signatures, fmt="%.17g", delimiter=",")
        (directory / "model.json").write_text(json.dumps({"sigma": self.sigma}, indent=2) + "\n")
        (directory / "config.cfg").write_text(config_to_text(self.config))

    @classmethod
    def load(cls, directory) -> "TrainedModel":
        directory = Path(directory)
        if not (directory / "model.json").exists():
            raise DataError(f"{directory} does not contain a trained model")
        meta = json.loads((directory / "model.json").read_text())
        sig = np.loadtxt(directory / "seen_signatures.csv", delimiter=",", ndmin=2)
        return cls(
            AnchorSet.load(directory),
            AnchorEmbedding.load(directory),
            ZslModel.load(directory),
            load_config(directory / "config.cfg"),
            meta["sigma"],
            sig,
        )


def train(seen: DatasetBundle, config: ExperimentConfig) -> TrainedModel:
    """Anchors -> class binding -> anchor embedding -> attribute predictor."""
    b, n_s = config.code_length, seen.n_classes
    if b > n_s:
        raise ConfigError(
            f"code length b={b} exceeds the number of seen classes n_s={n_s}; "
            "the code length is bounded by the number of anchors (b <= n_s)"
        )
    config.hash.check(n_s)
    km = config.kmeans
    with _timed("penalized k-means"):
        anchor_set = penalized_kmeans(seen.X, seen.y, km.beta, km.max_iter, km.tol, km.seed, n_classes=n_s)
    with _timed(f"embed anchors ({config.embedder.kind}, {b} bits)"):
        emb = embed_anchors(anchor_set.centers, config.embedder, b)
    sigma = config.hash.sigma
    if sigma == "auto":
        sigma = auto_sigma(seen.X, anchor_set.centers)
    with _timed("fit attribute predictor"):
        zsl = fit_eszsl(seen.X, seen.labels.one_hot(), seen.S, config.zsl.gamma, config.zsl.lam)
    return TrainedModel(anchor_set, emb, zsl, config, float(sigma), np.array(seen.S))


def extend(model: TrainedModel, S_unseen, unseen_class_ids=None) -> ExtendedAnchorSet:
    return extend_anchor_set(
        model.embedding, model.seen_signatures, S_unseen, unseen_class_ids, model.anchors.class_of_anchor
    )


def hash_seen_instances(model: TrainedModel, X, threads: int = 1) -> HashCodeSet:
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    if X.shape[1] != model.feature_dim:
        raise DataError(f"feature dimension {X.shape[1]} does not match model ({model.feature_dim})")
    with _timed(f"hash {X.shape[0]} seen-class instances"):
        return hash_seen(X, model.anchors, model.embedding, model.hash_params, threads=threads)


def hash_unseen_instances(model: TrainedModel, ext: ExtendedAnchorSet, S_unseen, X_u, threads: int = 1) -> HashCodeSet:
    X_u = np.atleast_2d(np.asarray(X_u, dtype=np.float64))
    with _timed(f"hash {X_u.shape[0]} unseen-class instances"):
        return hash_unseen(X_u, model.zsl, ext, S_unseen, model.hash_params, threads=threads)


# ---------------------------------------------------------------- protocol

def load_split(config: ExperimentConfig) -> SeenUnseenSplit:
    """Materialize the seen/unseen split named by the config's [data] or [synthetic] section."""
    if config.data is not None and config.data.features:
        dp = config.data
        if not (dp.labels and dp.signatures):
            raise ConfigError("[data] needs features, labels and signatures")
        bundle = load_dataset(dp.features, dp.labels, dp.signatures, dp.standardize)
        if dp.unseen_classes:
            if bundle.class_names is not None:
                original = {name: i for i, name in enumerate(bundle.class_names)}
                try:
                    ids = [original[str(c)] for c in dp.unseen_classes]
                except KeyError as exc:
                    raise ConfigError(f"unseen class {exc} not present in the dataset") from None
            else:
                ids = list(dp.unseen_classes)
        elif dp.n_unseen:
            ids = draw_unseen_classes(bundle.n_classes, dp.n_unseen, config.eval.split_seed)
        else:
            raise ConfigError("[data] needs unseen_classes or n_unseen")
        return split_seen_unseen(bundle, ids)
    sp = config.synthetic or SyntheticParams()
    return generate_synthetic(sp.n_seen, sp.n_unseen, sp.per_class, sp.dim, sp.attrs, sp.spread, sp.seed)


def run_trial(split: SeenUnseenSplit, config: ExperimentConfig, trial: int = 0) -> dict:
    """Train on the seen side, hash both sides and evaluate. Returns one metrics row."""
    model = train(split.seen, config)
    threads = config.threads
    seen_codes = hash_seen_instances(model, split.seen.X, threads)
    acc_train = anchor_assignment_accuracy(
        seen_codes, split.seen.y, anchor_hash_codes(model.embedding), model.anchors.class_of_anchor
    )
    ext = extend(model, split.unseen.S, split.unseen_class_ids)
    if len(split.unseen):
        unseen_codes = hash_unseen_instances(model, ext, split.unseen.S, split.unseen.X, threads)
    else:
        unseen_codes = HashCodeSet(np.zeros((0, (config.code_length + 7) // 8), np.uint8), config.code_length)
    acc_test = anchor_assignment_accuracy(unseen_codes, split.unseen.y, ext.unseen_codes(), np.arange(ext.n_unseen))

    seen_labels = split.seen_class_ids[split.seen.y]
    unseen_labels = split.unseen_class_ids[split.unseen.y]
    which = config.eval.retrieval_set
    if which == "seen":
        codes, labels = seen_codes, seen_labels
    elif which == "unseen":
        codes, labels = unseen_codes, unseen_labels
    else:
        codes, labels = seen_codes.concat(unseen_codes), np.concatenate([seen_labels, unseen_labels])

    ev = config.eval
    q, db = split_query_database(codes, labels, ev.query_fraction, ev.split_seed)
    lm = lookup_metrics(codes[q], labels[q], codes[db], labels[db], ev.radius, ev.empty_as_zero)
    mp = mean_average_precision(codes[q], labels[q], codes[db], labels[db])
    return {
        "method": config.embedder.kind,
        "code_length": config.code_length,
        "s": config.hash.s,
        "radius": ev.radius,
        "precision": lm.precision,
        "recall": lm.recall,
        "f1": lm.f1,
        "map": mp,
        "accuracy_train": acc_train.accuracy,
        "accuracy_test": acc_test.accuracy,
        "trial": trial,
        "split_mode": config.split_mode,
    }


_NUMERIC = ("precision", "recall", "f1", "map", "accuracy_train", "accuracy_test")


def _mean_row(rows: list) -> dict:
    out = dict(rows[0])
    for k in _NUMERIC:
        out[k] = float(np.mean([r[k] for r in rows]))
    out["trial"] = "mean"
    return out


def run_experiment(split: SeenUnseenSplit, config: ExperimentConfig) -> list:
    """Run every code length x trial; each group ends with its mean row.

    Trial ``t`` uses k-means seed ``kmeans.seed + t`` and query/database seed
    ``eval.split_seed + t``. In ``redraw`` mode the seen/unseen classes are
    also redrawn with seed ``eval.split_seed + t``.
    """
    rows = []
    full = split.merged() if config.split_mode == "redraw" else None
    for b in config.code_lengths:
        group = []
        for t in range(config.n_trials):
            cfg = replace(
                config,
                code_length=b,
                sweep_code_lengths=(),
                kmeans=replace(config.kmeans, seed=config.kmeans.seed + t),
                eval=replace(config.eval, split_seed=config.eval.split_seed + t),
            )
            sp = split
            if full is not None:
                ids = draw_unseen_classes(full.n_classes, split.n_unseen, config.eval.split_seed + t)
                sp = split_seen_unseen(full, ids)
            log.info("code length %d, trial %d", b, t)
            group.append(run_trial(sp, cfg, t))
        rows.extend(group)
        rows.append(_mean_row(group))
    return rows
