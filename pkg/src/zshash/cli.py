"""Command-line front-end.

Exit codes: 0 ok, 1 usage, 2 data error, 3 numeric failure. Metrics go to
stdout; logs and timings go to stderr. Flags override config-file values.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import anchors, evaluation, hashing
from .dataset import generate_synthetic, load_dataset, split_query_database, split_seen_unseen, write_dataset
from .embedding import EmbedderSpec
from .errors import ConfigError, DataError, NumericError
from .evaluation import format_rows, lookup_metrics, mean_average_precision
from .hashing import HashCodeSet
from .pipeline import (
    ExperimentConfig,
    SyntheticParams,
    TrainedModel,
    config_to_text,
    extend,
    hash_seen_instances,
    hash_unseen_instances,
    load_config,
    load_split,
    run_experiment,
    train,
)
from .zsl import PRESETS, ExtendedAnchorSet, ZslHyperparams

log = logging.getLogger("zshash")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(f"{self.prog}: {message}")


def _int_list(v: str) -> tuple:
    try:
        return tuple(int(x) for x in v.split(",") if x.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {v!r}") from None


def _add_common(p):
    p.add_argument("--threads", type=int, default=None, help="cap on worker threads for hashing (default: 1)")
    p.add_argument("-q", "--quiet", action="store_true", help="only log warnings and errors")


def _add_data(p):
    g = p.add_argument_group("data")
    g.add_argument("--config", help="experiment config file (INI key = value)")
    g.add_argument("--data-dir", help="directory holding features.csv, labels.csv, signatures.csv")
    g.add_argument("--features", help="features CSV")
    g.add_argument("--labels", help="labels CSV")
    g.add_argument("--signatures", help="class signatures CSV (attributes x classes)")
    g.add_argument("--unseen", type=_int_list, help="comma-separated unseen class ids")
    g.add_argument("--n-unseen", type=int, help="draw this many unseen classes at random")


def _add_model_flags(p):
    d = ExperimentConfig()
    g = p.add_argument_group("model")
    g.add_argument("--bits", type=_int_list, help=f"code length b, comma list sweeps (default: {d.code_length})")
    g.add_argument("--embedder", choices=("kernel_pca", "isomap", "lle"),
                   help=f"anchor embedder (default: {d.embedder.kind})")
    g.add_argument("--bandwidth", help=f"Kernel-PCA bandwidth or 'median' (default: {d.embedder.bandwidth})")
    g.add_argument("--neighbors", type=int, help=f"Isomap/LLE neighbours (default: {d.embedder.n_neighbors})")
    g.add_argument("--beta", type=float, help=f"label-mismatch penalty (default: {anchors.DEFAULT_BETA})")
    g.add_argument("--max-iter", type=int, help=f"k-means iterations (default: {anchors.DEFAULT_MAX_ITER})")
    g.add_argument("--tol", type=float, help=f"relative objective tolerance (default: {anchors.DEFAULT_TOL})")
    g.add_argument("--seed", type=int, help=f"k-means seed (default: {d.kmeans.seed})")
    g.add_argument("--sigma", help=f"RBF width or 'auto' (default: {d.hash.sigma})")
    g.add_argument("--s", type=int, help=f"number of nearest anchors (default: {hashing.DEFAULT_S})")
    g.add_argument("--omega", type=float, help=f"rank boost base (default: {hashing.DEFAULT_OMEGA:g})")
    g.add_argument("--preset", choices=sorted(PRESETS), help="gamma/lambda preset (default: awa = 10/100)")
    g.add_argument("--gamma", type=float, help=f"feature-side regularizer (default: {d.zsl.gamma:g})")
    g.add_argument("--lambda", dest="lam", type=float, help=f"attribute-side regularizer (default: {d.zsl.lam:g})")


def _add_eval_flags(p):
    d = ExperimentConfig().eval
    g = p.add_argument_group("evaluation")
    g.add_argument("--radius", type=int, help=f"Hamming lookup radius (default: {d.radius})")
    g.add_argument("--query-fraction", type=float, help=f"query share of the split (default: {d.query_fraction})")
    g.add_argument("--split-seed", type=int, help=f"query/database split seed (default: {d.split_seed})")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="zshash", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True

    p = sub.add_parser("synth", help="write a synthetic dataset")
    sd = SyntheticParams()
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--n-seen", type=int, default=sd.n_seen, help=f"(default: {sd.n_seen})")
    p.add_argument("--n-unseen", type=int, default=sd.n_unseen, help=f"(default: {sd.n_unseen})")
    p.add_argument("--per-class", type=int, default=sd.per_class, help=f"(default: {sd.per_class})")
    p.add_argument("--dim", type=int, default=sd.dim, help=f"(default: {sd.dim})")
    p.add_argument("--attrs", type=int, default=sd.attrs, help=f"(default: {sd.attrs})")
    p.add_argument("--spread", type=float, default=sd.spread, help=f"(default: {sd.spread})")
    p.add_argument("--seed", type=int, default=sd.seed, help=f"(default: {sd.seed})")
    _add_common(p)

    p = sub.add_parser("train", help="train a model on the seen classes")
    _add_data(p)
    _add_model_flags(p)
    p.add_argument("--out", required=True, help="model directory")
    _add_common(p)

    p = sub.add_parser("hash", help="hash a feature file with a trained model")
    p.add_argument("--model", required=True, help="model directory")
    p.add_argument("--features", required=True, help="features CSV")
    p.add_argument("--unseen", action="store_true", help="hash as unseen-class instances (run `extend` first)")
    p.add_argument("--out", required=True, help="binary code file")
    p.add_argument("--csv", help="also write codes as a +1/-1 CSV")
    _add_common(p)

    p = sub.add_parser("extend", help="add anchors for unseen classes from their signatures")
    p.add_argument("--model", required=True, help="model directory")
    p.add_argument("--signatures", required=True, help="unseen class signatures CSV (attributes x classes)")
    p.add_argument("--class-ids", type=_int_list, help="ids to record for the unseen classes")
    _add_common(p)

    p = sub.add_parser("eval", help="print retrieval metrics for a code file")
    p.add_argument("--codes", required=True, help="binary code file")
    p.add_argument("--labels", required=True, help="labels CSV aligned with the codes")
    p.add_argument("--anchor-codes", help="anchor code file; reports nearest-anchor accuracy")
    p.add_argument("--anchor-classes", type=_int_list, help="class of each anchor code (default: 0..n-1)")
    p.add_argument("--method", default="zsh", help="method label for the CSV row (default: zsh)")
    p.add_argument("--s", type=int, help="s value to record in the CSV row")
    _add_eval_flags(p)
    _add_common(p)

    p = sub.add_parser("run", help="run the full experiment protocol")
    _add_data(p)
    _add_model_flags(p)
    _add_eval_flags(p)
    p.add_argument("--trials", type=int, help="trials per code length (default: 1)")
    p.add_argument("--split-mode", choices=("fixed", "redraw"),
                   help="keep the seen/unseen split or redraw it per trial (default: fixed)")
    p.add_argument("--output", help="write the CSV here instead of stdout")
    _add_common(p)
    return parser


def _config_from_args(args) -> ExperimentConfig:
    cfg = load_config(args.config) if getattr(args, "config", None) else ExperimentConfig()
    g = lambda name: getattr(args, name, None)  # noqa: E731

    if g("bits"):
        bits = g("bits")
        cfg = replace(cfg, code_length=bits[0], sweep_code_lengths=bits if len(bits) > 1 else ())
    emb = cfg.embedder
    if g("embedder") or g("bandwidth") or g("neighbors"):
        emb = EmbedderSpec(g("embedder") or emb.kind,
                           g("bandwidth") if g("bandwidth") is not None else emb.bandwidth,
                           g("neighbors") or emb.n_neighbors, emb.lle_reg)
    km = cfg.kmeans
    km = replace(km, **{k: v for k, v in (("beta", g("beta")), ("max_iter", g("max_iter")),
                                          ("tol", g("tol")), ("seed", g("seed"))) if v is not None})
    hp = cfg.hash
    hp = replace(hp, **{k: v for k, v in (("sigma", g("sigma")), ("s", g("s")), ("omega", g("omega")))
                        if v is not None})
    zsl = ZslHyperparams.preset(g("preset")) if g("preset") else cfg.zsl
    zsl = ZslHyperparams(g("gamma") if g("gamma") is not None else zsl.gamma,
                         g("lam") if g("lam") is not None else zsl.lam)
    ev = cfg.eval
    ev = replace(ev, **{k: v for k, v in (("radius", g("radius")), ("query_fraction", g("query_fraction")),
                                          ("split_seed", g("split_seed"))) if v is not None})
    cfg = replace(cfg, embedder=emb, kmeans=km, hash=hp, zsl=zsl, eval=ev)
    if g("trials") is not None:
        cfg = replace(cfg, n_trials=g("trials"))
    if g("split_mode"):
        cfg = replace(cfg, split_mode=g("split_mode"))
    if g("threads") is not None:
        cfg = replace(cfg, threads=g("threads"))

    if g("data_dir") or g("features"):
        from .pipeline import DataParams
        base = Path(g("data_dir")) if g("data_dir") else None
        pick = lambda flag, name: g(flag) or (str(base / name) if base else None)  # noqa: E731
        unseen = g("unseen")
        n_unseen = g("n_unseen")
        if unseen is None and n_unseen is None and base is not None and (base / "unseen_classes.txt").exists():
            unseen = _int_list((base / "unseen_classes.txt").read_text().replace("\n", ","))
        cfg = replace(cfg, data=DataParams(pick("features", "features.csv"), pick("labels", "labels.csv"),
                                           pick("signatures", "signatures.csv"), unseen, n_unseen))
    elif cfg.data is not None and (g("unseen") or g("n_unseen")):
        cfg = replace(cfg, data=replace(cfg.data, unseen_classes=g("unseen") or cfg.data.unseen_classes,
                                        n_unseen=g("n_unseen") or cfg.data.n_unseen))
    return cfg


def cmd_synth(args) -> int:
    split = generate_synthetic(args.n_seen, args.n_unseen, args.per_class, args.dim, args.attrs,
                               args.spread, args.seed)
    out = Path(args.out)
    write_dataset(split.merged(), out)
    (out / "unseen_classes.txt").write_text("\n".join(str(i) for i in split.unseen_class_ids) + "\n")
    cfg = ExperimentConfig()
    from .pipeline import DataParams
    cfg = replace(cfg, zsl=ZslHyperparams.preset("sun"),
                  data=DataParams("features.csv", "labels.csv", "signatures.csv",
                                  tuple(int(i) for i in split.unseen_class_ids)))
    (out / "experiment.cfg").write_text(config_to_text(cfg))
    log.info("wrote %d seen + %d unseen instances to %s", len(split.seen), len(split.unseen), out)
    return EXIT_OK


def _check_bits_before_compute(cfg: ExperimentConfig, n_seen: int) -> None:
    too_long = [b for b in cfg.code_lengths if b > n_seen]
    if too_long:
        raise ConfigError(
            f"code length b={too_long[0]} exceeds the number of seen classes n_s={n_seen}; "
            "the code length is bounded by the number of anchors (b <= n_s)"
        )


def cmd_train(args) -> int:
    cfg = _config_from_args(args)
    split = load_split(cfg)
    _check_bits_before_compute(cfg, split.n_seen)
    if cfg.sweep_code_lengths:
        raise ConfigError("train takes a single --bits value")
    model = train(split.seen, cfg)
    model.save(args.out)
    np.savetxt(Path(args.out) / "seen_class_ids.csv", split.seen_class_ids, fmt="%d")
    log.info("model written to %s", args.out)
    return EXIT_OK


def _read_features(path) -> np.ndarray:
    try:
        X = np.loadtxt(path, delimiter=",", ndmin=2)
    except (OSError, ValueError) as exc:
        raise DataError(f"cannot read features {path}: {exc}") from None
    if not np.all(np.isfinite(X)):
        raise DataError("non-finite feature")
    return X


def cmd_hash(args) -> int:
    model = TrainedModel.load(args.model)
    X = _read_features(args.features)
    if X.shape[1] != model.feature_dim:
        raise DataError(f"feature dimension {X.shape[1]} does not match model ({model.feature_dim})")
    threads = args.threads or model.config.threads
    if args.unseen:
        mdir = Path(args.model)
        if not (mdir / "embedding_extended.json").exists():
            raise DataError("model has no unseen anchors; run `zshash extend` first")
        ext = ExtendedAnchorSet.load(mdir, model.embedding)
        S_u = np.loadtxt(mdir / "unseen_signatures.csv", delimiter=",", ndmin=2)
        codes = hash_unseen_instances(model, ext, S_u, X, threads)
    else:
        codes = hash_seen_instances(model, X, threads)
    codes.save(args.out)
    if args.csv:
        codes.save_csv(args.csv)
    return EXIT_OK


def cmd_extend(args) -> int:
    model = TrainedModel.load(args.model)
    try:
        S_u = np.loadtxt(args.signatures, delimiter=",", ndmin=2)
    except (OSError, ValueError) as exc:
        raise DataError(f"cannot read signatures {args.signatures}: {exc}") from None
    if S_u.shape[0] != model.seen_signatures.shape[0]:
        raise DataError(f"signature rows {S_u.shape[0]} do not match attribute dimension "
                        f"{model.seen_signatures.shape[0]}")
    if S_u.min() < 0 or S_u.max() > 1:
        raise DataError("signature entry outside [0,1]")
    ext = extend(model, S_u, args.class_ids)
    mdir = Path(args.model)
    ext.save(mdir)
    np.savetxt(mdir / "unseen_signatures.csv", S_u, fmt="%.17g", delimiter=",")
    ext.unseen_codes().save(mdir / "unseen_anchor_codes.zsh")
    hashing.anchor_hash_codes(model.embedding).save(mdir / "seen_anchor_codes.zsh")
    return EXIT_OK


def cmd_eval(args) -> int:
    codes = HashCodeSet.load(args.codes)
    try:
        labels = np.loadtxt(args.labels, dtype=np.int64, ndmin=1)
    except (OSError, ValueError) as exc:
        raise DataError(f"cannot read labels {args.labels}: {exc}") from None
    if labels.size != len(codes):
        raise DataError(f"{labels.size} labels for {len(codes)} codes")
    d = ExperimentConfig().eval
    radius = d.radius if args.radius is None else args.radius
    frac = d.query_fraction if args.query_fraction is None else args.query_fraction
    seed = d.split_seed if args.split_seed is None else args.split_seed
    q, db = split_query_database(codes, labels, frac, seed)
    lm = lookup_metrics(codes[q], labels[q], codes[db], labels[db], radius)
    row = {"method": args.method, "code_length": codes.n_bits, "s": args.s if args.s is not None else "",
           "radius": radius, "precision": lm.precision, "recall": lm.recall, "f1": lm.f1,
           "map": mean_average_precision(codes[q], labels[q], codes[db], labels[db]),
           "accuracy_train": "", "accuracy_test": ""}
    if args.anchor_codes:
        anchor_codes = HashCodeSet.load(args.anchor_codes)
        coa = args.anchor_classes if args.anchor_classes else np.arange(len(anchor_codes))
        row["accuracy_test"] = evaluation.anchor_assignment_accuracy(codes, labels, anchor_codes, coa).accuracy
    sys.stdout.write(format_rows([row], extra_columns=()))
    return EXIT_OK


def cmd_run(args) -> int:
    cfg = _config_from_args(args)
    split = load_split(cfg)
    _check_bits_before_compute(cfg, split.n_seen)
    text = format_rows(run_experiment(split, cfg))
    if args.output:
        Path(args.output).write_text(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


COMMANDS = {"synth": cmd_synth, "train": cmd_train, "hash": cmd_hash, "extend": cmd_extend,
            "eval": cmd_eval, "run": cmd_run}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help
        return int(exc.code or 0)

    logging.basicConfig(stream=sys.stderr, level=logging.WARNING if args.quiet else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s", force=True)
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"zshash: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DataError as exc:
        print(f"zshash: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (NumericError, np.linalg.LinAlgError, FloatingPointError) as exc:
        print(f"zshash: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (OSError, json.JSONDecodeError) as exc:
        print(f"zshash: data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
