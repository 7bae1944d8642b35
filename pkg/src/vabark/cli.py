"""Command-line entry point: the pipeline as composable subcommands.

Every run prints its effective configuration (defaults merged with config
files and flags) before doing work, writes outputs under --out-dir, and is
byte-reproducible for a fixed seed regardless of --jobs.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys

import numpy as np

from . import CHECKPOINT_FORMAT_VERSION, __version__
from .anchors import AnchorSet, fit_anchors
from .audio import SpectrogramConfig, load_wav, mel_spectrogram_batch, standardize_duration
from .checkpoint import load_checkpoint
from .errors import CliUserError, VabarkError
from .experiments import EXPERIMENT_KINDS, run_experiment
from .features import AcousticFeatures, extract_features
from .manifest import is_labeled, read_manifest, resolve_audio_path, write_manifest
from .metrics import MAE_MODES, emit_report, evaluate_predictions, read_scatter, va_report_from_scatter
from .model import ModelConfig, predict_timed
from .parallel import ordered_map
from .synth import load_emotion_acoustics, synth_corpus
from .training import (
    NormStats,
    TrainConfig,
    predict_in_batches,
    prepare_batch,
    stratified_split,
    targets_from_rows,
    train,
)
from .valabel import label_from_features, load_bias_table

log = logging.getLogger("vabark")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise CliUserError(f"{self.prog}: {message}\n{self.format_usage()}")


def _setup_logging():
    level = os.environ.get("VA_BARK_LOG", "INFO").upper()
    logging.basicConfig(
        level=getattr(logging, level, logging.INFO),
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )


def _dump_effective_config(name: str, cfg: dict) -> None:
    print(f"effective-config {name}: " + json.dumps(cfg, sort_keys=True, default=str))


def _load_json(path):
    with open(path, "r", encoding="utf-8") as fh:
        return json.load(fh)


def _merged_config(cls, path, overrides: dict):
    """defaults < config file < explicit flags."""
    data = dict(_load_json(path)) if path else {}
    data.update({k: v for k, v in overrides.items() if v is not None})
    return cls.from_dict(data)


def _spec_config(path) -> SpectrogramConfig:
    if not path:
        return SpectrogramConfig()
    return SpectrogramConfig(**_load_json(path))


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def cmd_synth(args) -> int:
    mix = _load_json(args.mix) if args.mix else None
    acoustics = load_emotion_acoustics(args.acoustics) if args.acoustics else None
    _dump_effective_config("synth", {
        "n": args.n, "seed": args.seed, "out_dir": args.out_dir, "mix": mix or "default",
        "enhanced_share": args.enhanced_share, "jobs": args.jobs,
    })
    rows = synth_corpus(
        args.n, seed=args.seed, out_dir=args.out_dir, class_mix=mix,
        acoustics=acoustics, enhanced_share=args.enhanced_share, jobs=args.jobs,
    )
    log.info("wrote %d samples under %s", len(rows), args.out_dir)
    return 0


def _features_for_rows(rows, manifest_path, spec_cfg, jobs):
    def one(row):
        w = load_wav(resolve_audio_path(manifest_path, row))
        w = standardize_duration(w, spec_cfg.target_duration, spec_cfg.sample_rate)
        return extract_features(w, spec_cfg)

    return ordered_map(one, rows, jobs=jobs)


def cmd_features(args) -> int:
    spec_cfg = _spec_config(args.spec_config)
    _dump_effective_config("features", {
        "manifest": args.manifest, "out_dir": args.out_dir, "jobs": args.jobs,
        "spectrogram": spec_cfg.__dict__,
    })
    rows = read_manifest(args.manifest)
    feats = _features_for_rows(rows, args.manifest, spec_cfg, args.jobs)
    os.makedirs(args.out_dir, exist_ok=True)
    out_path = os.path.join(args.out_dir, "features.jsonl")
    with open(out_path, "w", encoding="utf-8") as fh:
        for row, f in zip(rows, feats):
            fh.write(json.dumps({"id": row["id"], **f.to_dict()}) + "\n")
    log.info("wrote %s (%d rows)", out_path, len(rows))
    return 0


def _read_features_jsonl(path) -> dict:
    feats = {}
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                d = json.loads(line)
                feats[d["id"]] = AcousticFeatures.from_dict(d)
    if not feats:
        raise CliUserError(f"{path}: no feature rows")
    return feats


def cmd_anchors(args) -> int:
    _dump_effective_config("anchors", {
        "features": args.features, "out_dir": args.out_dir,
        "scope": args.anchor_scope, "splits": args.splits,
    })
    feats = _read_features_jsonl(args.features)
    if args.anchor_scope == "train":
        if not args.splits:
            raise CliUserError("--anchor-scope train requires --splits")
        train_ids = set(_load_json(args.splits)["train"])
        selected = [f for fid, f in feats.items() if fid in train_ids]
    else:
        selected = list(feats.values())
    anchors = fit_anchors(selected)
    os.makedirs(args.out_dir, exist_ok=True)
    out_path = os.path.join(args.out_dir, "anchors.json")
    anchors.save(out_path)
    log.info("fit anchors on %d samples -> %s", len(selected), out_path)
    return 0


def cmd_label(args) -> int:
    spec_cfg = _spec_config(args.spec_config)
    _dump_effective_config("label", {
        "manifest": args.manifest, "anchors": args.anchors, "out_dir": args.out_dir,
        "features": args.features, "bias_table": args.bias_table, "jobs": args.jobs,
    })
    rows = read_manifest(args.manifest)
    anchors = AnchorSet.load(args.anchors)
    bias = load_bias_table(args.bias_table) if args.bias_table else None
    if args.features:
        by_id = _read_features_jsonl(args.features)
        missing = [r["id"] for r in rows if r["id"] not in by_id]
        if missing:
            raise CliUserError(f"feature file lacks ids such as {missing[:5]}")
        feats = [by_id[r["id"]] for r in rows]
    else:
        feats = _features_for_rows(rows, args.manifest, spec_cfg, args.jobs)
    labeled = []
    for row, f in zip(rows, feats):
        lab = label_from_features(f, row["emotion"], anchors, bias)
        labeled.append({**row, "valence": lab.valence, "arousal": lab.arousal})
    os.makedirs(args.out_dir, exist_ok=True)
    out_path = os.path.join(args.out_dir, "labeled.jsonl")
    write_manifest(out_path, labeled)
    log.info("wrote %s (%d labeled rows)", out_path, len(labeled))
    return 0


def cmd_split(args) -> int:
    fractions = tuple(float(x) for x in args.fractions.split(","))
    _dump_effective_config("split", {
        "manifest": args.manifest, "fractions": fractions, "seed": args.seed, "out_dir": args.out_dir,
    })
    rows = read_manifest(args.manifest)
    tr, va, te = stratified_split(rows, fractions, args.seed)
    os.makedirs(args.out_dir, exist_ok=True)
    out_path = os.path.join(args.out_dir, "splits.json")
    with open(out_path, "w", encoding="utf-8") as fh:
        json.dump({"train": [r["id"] for r in tr], "val": [r["id"] for r in va],
                   "test": [r["id"] for r in te]}, fh, indent=2, sort_keys=True)
        fh.write("\n")
    log.info("wrote %s (%d/%d/%d)", out_path, len(tr), len(va), len(te))
    return 0


def _labeled_rows(args, rows, spec_cfg):
    if is_labeled(rows):
        return rows
    if not args.anchors:
        raise CliUserError("manifest is unlabeled; pass --anchors so labels can be generated")
    anchors = AnchorSet.load(args.anchors)
    feats = _features_for_rows(rows, args.manifest, spec_cfg, args.jobs)
    out = []
    for row, f in zip(rows, feats):
        lab = label_from_features(f, row["emotion"], anchors)
        out.append({**row, "valence": lab.valence, "arousal": lab.arousal})
    return out


def cmd_train(args) -> int:
    spec_cfg = _spec_config(args.spec_config)
    model_cfg = _merged_config(ModelConfig, args.model_config, {})
    train_cfg = _merged_config(TrainConfig, args.train_config, {
        "seed": args.seed, "epochs": args.epochs, "batch_size": args.batch_size,
    })
    _dump_effective_config("train", {
        "manifest": args.manifest, "anchors": args.anchors, "out_dir": args.out_dir,
        "jobs": args.jobs, "model": model_cfg.to_dict(), "train": train_cfg.to_dict(),
        "spectrogram": spec_cfg.__dict__,
    })
    rows = _labeled_rows(args, read_manifest(args.manifest), spec_cfg)
    audio_root = os.path.dirname(os.path.abspath(args.manifest))
    result = train(
        rows, audio_root, model_cfg, train_cfg, args.out_dir,
        spec_cfg=spec_cfg, jobs=args.jobs, log=log.info,
    )
    log.info("best epoch %s with val VA MAE %.4f", result.best_epoch, result.best_val_mae)
    return 0


def cmd_experiment(args) -> int:
    spec_cfg = _spec_config(args.spec_config)
    model_cfg = _merged_config(ModelConfig, args.model_config, {})
    train_cfg = _merged_config(TrainConfig, args.train_config, {
        "seed": args.seed, "epochs": args.epochs, "batch_size": args.batch_size,
    })
    _dump_effective_config("experiment", {
        "kind": args.kind, "manifest": args.manifest, "out_dir": args.out_dir,
        "jobs": args.jobs, "model": model_cfg.to_dict(), "train": train_cfg.to_dict(),
    })
    rows = _labeled_rows(args, read_manifest(args.manifest), spec_cfg)
    audio_root = os.path.dirname(os.path.abspath(args.manifest))
    report = run_experiment(
        args.kind, rows, audio_root, model_cfg, train_cfg, args.out_dir,
        spec_cfg=spec_cfg, jobs=args.jobs, log=log.info,
    )
    log.info("experiment %s finished; report under %s", args.kind, args.out_dir)
    for line in report["table"]:
        log.info("  %s", line)
    return 0


def cmd_eval(args) -> int:
    _dump_effective_config("eval", {
        "ckpt": args.ckpt, "manifest": args.manifest, "splits": args.splits,
        "subset": args.subset, "out_dir": args.out_dir, "mae_mode": args.mae_mode,
    })
    rows = read_manifest(args.manifest)
    if not is_labeled(rows):
        raise CliUserError("eval needs a labeled manifest")
    if args.splits:
        ids = set(_load_json(args.splits)[args.subset])
        rows = [r for r in rows if r["id"] in ids]
    if not rows:
        raise CliUserError("no rows selected for evaluation")
    params, model_cfg, stats_dict, spec_cfg, _ = load_checkpoint(args.ckpt)
    if stats_dict is None or spec_cfg is None:
        raise CliUserError("checkpoint lacks normalization stats or spectrogram config")
    stats = NormStats.from_dict(stats_dict)
    audio_root = os.path.dirname(os.path.abspath(args.manifest))
    X = prepare_batch(rows, range(len(rows)), audio_root, spec_cfg, stats, jobs=args.jobs)
    out = predict_in_batches(params, model_cfg, X)
    targets = targets_from_rows(rows)
    report = evaluate_predictions(
        out.valence, out.arousal, targets["valence"], targets["arousal"],
        out.emotion_probs.argmax(1), targets["emotion"],
        out.size_probs.argmax(1), targets["size"],
        out.gender_probs.argmax(1), targets["gender"],
        mae_mode=args.mae_mode,
    )
    scatter = [
        {"id": r["id"], "pred_v": float(out.valence[i]), "true_v": float(r["valence"]),
         "pred_a": float(out.arousal[i]), "true_a": float(r["arousal"]),
         "emotion": r["emotion"], "size": r["size"], "gender": r["gender"]}
        for i, r in enumerate(rows)
    ]
    paths = emit_report(report, scatter, args.out_dir, history_src=args.history)
    log.info("eval done: va_mae=%.4f valence_r=%.4f arousal_r=%.4f -> %s",
             report.va_mae, report.valence_r, report.arousal_r, paths["report"])
    return 0


def cmd_infer(args) -> int:
    _dump_effective_config("infer", {"ckpt": args.ckpt, "wav": args.wav})
    params, model_cfg, stats_dict, spec_cfg, _ = load_checkpoint(args.ckpt)
    if stats_dict is None or spec_cfg is None:
        raise CliUserError("checkpoint lacks normalization stats or spectrogram config")
    stats = NormStats.from_dict(stats_dict)
    w = standardize_duration(load_wav(args.wav), spec_cfg.target_duration, spec_cfg.sample_rate)
    spec = stats.apply(mel_spectrogram_batch(w.samples[None, :], spec_cfg))[0]
    out, latency_ms = predict_timed(params, model_cfg, spec)
    result = {
        "valence": float(out.valence[0]),
        "arousal": float(out.arousal[0]),
        "emotion_probs": [float(p) for p in out.emotion_probs[0]],
        "size_probs": [float(p) for p in out.size_probs[0]],
        "gender_probs": [float(p) for p in out.gender_probs[0]],
        "latency_ms": latency_ms,
    }
    print(json.dumps(result, sort_keys=True))
    return 0


def cmd_report(args) -> int:
    _dump_effective_config("report", {
        "scatter": args.scatter, "history": args.history,
        "out_dir": args.out_dir, "mae_mode": args.mae_mode,
    })
    rows = read_scatter(args.scatter)
    if not rows:
        raise CliUserError(f"{args.scatter}: empty scatter file")
    report = va_report_from_scatter(rows, mae_mode=args.mae_mode)
    paths = emit_report(report, rows, args.out_dir, history_src=args.history)
    log.info("recomputed report -> %s", paths["report"])
    return 0


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------


def build_parser() -> _Parser:
    parser = _Parser(prog="vabark", description="Valence-arousal pipeline for animal vocalizations")
    parser.add_argument(
        "--version", action="version",
        version=f"vabark {__version__} (checkpoint format v{CHECKPOINT_FORMAT_VERSION})",
    )
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")

    def add(name, fn, help_):
        p = sub.add_parser(name, help=help_)
        p.set_defaults(fn=fn)
        return p

    p = add("synth", cmd_synth, "generate a synthetic labeled-able corpus")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--mix", help="JSON file with emotion proportions")
    p.add_argument("--acoustics", help="JSON file overriding the emotion-acoustics table")
    p.add_argument("--enhanced-share", type=float, default=0.628)
    p.add_argument("--jobs", type=int, default=1)

    p = add("features", cmd_features, "extract per-clip acoustic features")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--spec-config")
    p.add_argument("--jobs", type=int, default=1)

    p = add("anchors", cmd_anchors, "fit corpus quantile anchors")
    p.add_argument("--features", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--anchor-scope", choices=("all", "train"), default="all")
    p.add_argument("--splits", help="splits.json; required for --anchor-scope train")

    p = add("label", cmd_label, "attach valence/arousal labels to a manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--anchors", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--features", help="reuse a features.jsonl instead of recomputing")
    p.add_argument("--bias-table", help="JSON override for the emotion bias table")
    p.add_argument("--spec-config")
    p.add_argument("--jobs", type=int, default=1)

    p = add("split", cmd_split, "write a stratified train/val/test split")
    p.add_argument("--manifest", required=True)
    p.add_argument("--fractions", default="0.7,0.15,0.15")
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--out-dir", required=True)

    for name, fn, help_ in (
        ("train", cmd_train, "train the multi-task model"),
        ("experiment", cmd_experiment, "run an ablation or LOGO experiment"),
    ):
        p = add(name, fn, help_)
        if name == "experiment":
            p.add_argument("--kind", choices=EXPERIMENT_KINDS, required=True)
        p.add_argument("--manifest", required=True)
        p.add_argument("--anchors", help="anchors.json (used to label an unlabeled manifest)")
        p.add_argument("--model-config")
        p.add_argument("--train-config")
        p.add_argument("--spec-config")
        p.add_argument("--out-dir", required=True)
        p.add_argument("--seed", type=int)
        p.add_argument("--epochs", type=int)
        p.add_argument("--batch-size", type=int)
        p.add_argument("--jobs", type=int, default=1)

    p = add("eval", cmd_eval, "evaluate a checkpoint on a manifest subset")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--splits")
    p.add_argument("--subset", choices=("train", "val", "test"), default="test")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--history", help="history.csv to copy alongside the report")
    p.add_argument("--mae-mode", choices=MAE_MODES, default="eq6")
    p.add_argument("--jobs", type=int, default=1)

    p = add("infer", cmd_infer, "predict VA and head probabilities for one WAV")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--wav", required=True)

    p = add("report", cmd_report, "rebuild report files from a va_scatter.csv")
    p.add_argument("--scatter", required=True)
    p.add_argument("--history")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--mae-mode", choices=MAE_MODES, default="eq6")

    return parser


def main(argv=None) -> int:
    _setup_logging()
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if not getattr(args, "fn", None):
            parser.print_usage(sys.stderr)
            return 1
        return args.fn(args)
    except CliUserError as exc:
        print(str(exc), file=sys.stderr)
        return 1
    except VabarkError as exc:
        log.error("%s", exc)
        return 1
    except Exception:  # pragma: no cover - internal errors
        log.exception("internal error")
        return 2


if __name__ == "__main__":
    sys.exit(main())
