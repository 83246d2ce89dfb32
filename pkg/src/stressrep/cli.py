"""Command-line entry point: ``stressrep <command> ...``.

Commands::

    corpus synth      generate the synthetic two-condition corpus
    features extract  CPS-115 feature CSV for a manifest
    pretrain          hybrid self-supervised pretraining
    embed             frozen-encoder embeddings for a manifest
    eval              speaker-independent SVM evaluation of features or embeddings
    report            compare evaluation reports

Exit codes: 0 success, 1 usage, 2 data error, 3 numeric failure.
"""
from __future__ import annotations

import argparse
import csv
import io
import logging
import os
import sys

import numpy as np

from . import __version__
from .checkpoint import atomic_write_bytes
from .config import RunConfig, load_config
from .corpus import manifest_features, manifest_logmels
from .embeddings import is_embedding_file, read_embeddings, write_embeddings
from .errors import ConfigError, NumericalError, SchemaMismatchError, StressRepError
from .evaluation import EvalConfig, EvalReport, evaluate
from .features import FEATURE_NAMES, SupervisionVector, fit_standardizer, read_feature_csv, write_feature_csv
from .manifest import read_manifest
from .nn import HeadConfig, NetConfig, EncoderConfig, init_params
from .synth import gen_corpus
from .trainer import Pretrainer, embed_logmels, load_model

log = logging.getLogger("stressrep")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _common(p):
    p.add_argument("--config", help="YAML run configuration")
    p.add_argument("--seed", type=int, help="random seed (overrides the config)")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="stressrep", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", parser_class=_Parser)

    corpus = sub.add_parser("corpus", help="corpus utilities")
    csub = corpus.add_subparsers(dest="action", parser_class=_Parser)
    p = csub.add_parser("synth", help="generate a synthetic corpus")
    _common(p)
    p.add_argument("--speakers", type=int, default=20)
    p.add_argument("--utts", type=int, default=10, help="utterances per speaker and condition")
    p.add_argument("--min-dur", type=float, default=1.0)
    p.add_argument("--max-dur", type=float, default=3.0)
    p.add_argument("--out", required=True)

    feats = sub.add_parser("features", help="handcrafted features")
    fsub = feats.add_subparsers(dest="action", parser_class=_Parser)
    p = fsub.add_parser("extract", help="CPS-115 features for every utterance of a manifest")
    _common(p)
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("pretrain", help="hybrid self-supervised pretraining")
    _common(p)
    p.add_argument("--manifest", required=True)
    p.add_argument("--features", help="feature CSV (computed from the manifest when omitted)")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--steps", type=int)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--alpha-ss", type=float)
    p.add_argument("--alpha-sup", type=float)
    p.add_argument("--tau", type=float)
    p.add_argument("--lr", type=float)
    p.add_argument("--checkpoint-every", type=int)
    p.add_argument("--resume", help="continue from a checkpoint written by an earlier run")

    p = sub.add_parser("embed", help="frozen-encoder embeddings")
    _common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--random-init", action="store_true",
                   help="use a freshly initialised encoder of the checkpoint's shape (baseline)")

    p = sub.add_parser("eval", help="speaker-independent SVM evaluation")
    _common(p)
    p.add_argument("--input", required=True, help="feature CSV or embedding file")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True, help="report JSON path")
    p.add_argument("--mode", choices=("per-partition", "train-fit"))
    p.add_argument("--folds", type=int)
    p.add_argument("--ratio", type=float)

    p = sub.add_parser("report", help="compare evaluation reports")
    _common(p)
    p.add_argument("reports", nargs="+")
    p.add_argument("--out", help="CSV path for the comparison table")
    return ap


# ------------------------------------------------------------------ helpers

def _resolve(args, overrides: dict | None = None) -> RunConfig:
    over = {k: dict(v) for k, v in (overrides or {}).items()}
    if args.seed is not None:
        over.setdefault("training", {})["seed"] = args.seed
        over.setdefault("evaluation", {})["seed"] = args.seed
    return load_config(args.config, over)


def _echo_config(cfg: RunConfig, path: str) -> None:
    atomic_write_bytes(path, cfg.to_yaml().encode())


def _file_config_path(out: str) -> str:
    return f"{out}.config.yaml"


def _net_for(cfg: RunConfig, input_shape, out_dim) -> NetConfig:
    m = cfg.model
    try:
        return NetConfig(tuple(input_shape), EncoderConfig(tuple(m.channels), m.embed_dim),
                         HeadConfig(m.hidden, out_dim))
    except ValueError as exc:
        raise ConfigError(f"invalid [model] settings: {exc}") from exc


# ------------------------------------------------------------------ commands

def cmd_corpus_synth(args) -> int:
    cfg = _resolve(args, {"paths": {"corpus_dir": args.out}})
    seed = cfg.training.seed if args.seed is None else args.seed
    if args.speakers < 1 or args.utts < 1 or not 0 < args.min_dur <= args.max_dur:
        raise UsageError("--speakers/--utts must be positive and 0 < --min-dur <= --max-dur")
    m = gen_corpus(args.speakers, args.utts, args.out, seed, durations=(args.min_dur, args.max_dur))
    _echo_config(cfg, os.path.join(args.out, "resolved_config.yaml"))
    print(f"wrote {len(m.records)} utterances from {len(m.speakers)} speakers to {args.out}")
    return EXIT_OK


def cmd_features(args) -> int:
    cfg = _resolve(args, {"paths": {"manifest": args.manifest, "features": args.out}})
    m = read_manifest(args.manifest)
    m.validate(check_files=True, for_evaluation=False)
    X = manifest_features(m)
    write_feature_csv(args.out, m.ids, X, schema_id=cfg.features.schema_id)
    _echo_config(cfg, _file_config_path(args.out))
    print(f"wrote {X.shape[0]} x {X.shape[1]} features to {args.out}")
    return EXIT_OK


def _load_features_for(m, path, schema_id):
    sid, names, ids, X = read_feature_csv(path)
    if sid != schema_id or tuple(names) != FEATURE_NAMES:
        raise SchemaMismatchError(f"{path}: schema {sid!r} does not match {schema_id!r}")
    rows = dict(zip(ids, X))
    missing = [u for u in m.ids if u not in rows]
    if missing:
        raise StressRepError(f"{path}: no features for utterance {missing[0]!r}")
    return np.stack([rows[u] for u in m.ids])


def cmd_pretrain(args) -> int:
    tr = {k: v for k, v in {"steps": args.steps, "batch_size": args.batch_size, "alpha_ss": args.alpha_ss,
                            "alpha_sup": args.alpha_sup, "tau": args.tau, "lr": args.lr,
                            "checkpoint_every": args.checkpoint_every}.items() if v is not None}
    cfg = _resolve(args, {"training": tr, "paths": {"manifest": args.manifest, "out": args.out}})
    m = read_manifest(args.manifest)
    m.validate(check_files=True, for_evaluation=False)
    os.makedirs(args.out, exist_ok=True)
    X = _load_features_for(m, args.features, cfg.features.schema_id) if args.features else manifest_features(m)
    st = fit_standardizer([SupervisionVector(x) for x in X])
    sup = (X - st.mean) / st.std
    lms = manifest_logmels(m, cfg.frontend)
    pt = Pretrainer(lms, sup, m.ids, cfg.training, cfg.frontend, cfg.augmentation)
    net = _net_for(cfg, pt.net.input_shape, sup.shape[1])
    if net != pt.net:
        pt = Pretrainer(lms, sup, m.ids, cfg.training, cfg.frontend, cfg.augmentation, net=net)
    if args.resume:
        pt.resume(args.resume)
    _echo_config(cfg, os.path.join(args.out, "resolved_config.yaml"))

    def progress(step, parts):
        if args.verbose or step % 50 == 0 or step == cfg.training.steps:
            print(f"step {step:5d}  l_ss {parts.l_ss:.4f}  l_sup {parts.l_sup:.4f}  "
                  f"l_hybrid {parts.l_hybrid:.4f}", flush=True)

    pt.run(out_dir=args.out, callback=progress)
    print(f"checkpoint: {os.path.join(args.out, 'checkpoint.ckpt')}")
    return EXIT_OK


def cmd_embed(args) -> int:
    cfg = _resolve(args, {"paths": {"checkpoint": args.checkpoint, "manifest": args.manifest,
                                    "embeddings": args.out}})
    model = load_model(args.checkpoint)
    explicit_frontend = args.config is not None and _config_has_section(args.config, "frontend")
    if explicit_frontend and cfg.frontend != model.frontend:
        raise ConfigError(f"configured frontend {cfg.frontend} differs from checkpoint {model.frontend}")
    m = read_manifest(args.manifest)
    m.validate(check_files=True, for_evaluation=False)
    online = model.online
    source = model.checkpoint_id
    if args.random_init:
        seed = cfg.training.seed
        online = init_params(model.net, np.random.default_rng(seed))
        source = f"random-init-seed{seed}"
    E = embed_logmels(online, model.net, model.norm_stats, manifest_logmels(m, model.frontend))
    write_embeddings(args.out, m.ids, E, source)
    _echo_config(cfg, _file_config_path(args.out))
    print(f"wrote {E.shape[0]} x {E.shape[1]} embeddings to {args.out}")
    return EXIT_OK


def _config_has_section(path: str, name: str) -> bool:
    import yaml
    with open(path) as fh:
        data = yaml.safe_load(fh) or {}
    return bool(data.get(name))


def cmd_eval(args) -> int:
    ev = {k: v for k, v in {"mode": args.mode, "folds": args.folds, "ratio": args.ratio}.items()
          if v is not None}
    cfg = _resolve(args, {"evaluation": ev, "paths": {"manifest": args.manifest, "out": args.out}})
    m = read_manifest(args.manifest)
    m.validate(check_files=False, for_evaluation=True)
    if not os.path.isfile(args.input):
        raise StressRepError(f"no such input file: {args.input}")
    if is_embedding_file(args.input):
        ids, X, source = read_embeddings(args.input)
        kind = "embeddings"
    else:
        sid, _, ids, X = read_feature_csv(args.input)
        source = sid or ""
        kind = "features"
    e = cfg.evaluation
    report = evaluate(ids, X, m, EvalConfig(e.ratio, tuple(e.grid), e.folds, e.seed, e.mode,
                                            e.svm_tol, e.svm_max_iter))
    report.metadata.update({"input_kind": kind, "source": source})
    atomic_write_bytes(args.out, report.to_json().encode())
    _echo_config(cfg, _file_config_path(args.out))
    print(report.table())
    return EXIT_OK


def comparison_rows(paths) -> list:
    rows = []
    for p in paths:
        if not os.path.isfile(p):
            raise StressRepError(f"no such report: {p}")
        with open(p) as fh:
            try:
                r = EvalReport.from_json(fh.read())
            except (ValueError, TypeError) as exc:
                raise StressRepError(f"{p}: not an evaluation report ({exc})") from exc
        name = os.path.splitext(os.path.basename(p))[0]
        rows.append((name, r.uar, r.C, r.feature_dim, r.n_test))
    rows.sort(key=lambda r: (-r[1], r[0]))
    return rows


def cmd_report(args) -> int:
    cfg = _resolve(args)
    rows = comparison_rows(args.reports)
    width = max(4, *(len(r[0]) for r in rows))
    lines = [f"{'name':<{width}}  {'UAR':>6}  {'C':>8}  {'dim':>5}  {'n_test':>6}"]
    lines += [f"{n:<{width}}  {u:6.4f}  {c:8g}  {d:5d}  {t:6d}" for n, u, c, d, t in rows]
    print("\n".join(lines))
    if args.out:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["name", "uar", "C", "feature_dim", "n_test"])
        for n, u, c, d, t in rows:
            w.writerow([n, repr(u), repr(c), d, t])
        atomic_write_bytes(args.out, buf.getvalue().encode())
        _echo_config(cfg, _file_config_path(args.out))
    return EXIT_OK


COMMANDS = {
    ("corpus", "synth"): cmd_corpus_synth,
    ("features", "extract"): cmd_features,
    ("pretrain", None): cmd_pretrain,
    ("embed", None): cmd_embed,
    ("eval", None): cmd_eval,
    ("report", None): cmd_report,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        key = (args.command, getattr(args, "action", None))
        if key not in COMMANDS:
            raise UsageError("stressrep: choose a command (corpus synth, features extract, pretrain, "
                             "embed, eval, report)")
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        return COMMANDS[key](args)
    except (UsageError, ConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (NumericalError, FloatingPointError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (StressRepError, OSError, ValueError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
