"""Ablation and cross-group generalization experiments.

Ablation kinds toggle auxiliary loss weights while everything else stays
fixed; every non-baseline kind also trains the va_only baseline so the
emitted table carries a within-run improvement column. The LOGO experiment
trains on one body-size group and evaluates on the complement, reporting
the generalization gap against the within-group test split.
"""

from __future__ import annotations

import csv
import json
import os
import time

import numpy as np

from .audio import SpectrogramConfig
from .checkpoint import load_checkpoint
from .errors import ConfigError, SplitError
from .metrics import evaluate_predictions
from .model import ModelConfig
from .training import (
    LossWeights,
    NormStats,
    TrainConfig,
    predict_in_batches,
    prepare_batch,
    stratified_split,
    targets_from_rows,
    train,
)

ABLATION_WEIGHTS = {
    "va_only": LossWeights(w_e=0.0, w_s=0.0, w_g=0.0),
    "emotion": LossWeights(w_e=0.3, w_s=0.0, w_g=0.0),
    "size": LossWeights(w_e=0.0, w_s=0.2, w_g=0.0),
    "gender": LossWeights(w_e=0.0, w_s=0.0, w_g=0.1),
    "full_mtl": LossWeights(),
}

EXPERIMENT_KINDS = tuple(ABLATION_WEIGHTS) + ("logo",)

LOGO_GROUPS = {"large": ("large",), "small_medium": ("small", "medium")}


def _evaluate_checkpoint(ckpt_path, rows, audio_root, jobs=1, mae_mode="eq6"):
    params, model_cfg, stats_dict, spec_cfg, _ = load_checkpoint(ckpt_path)
    stats = NormStats.from_dict(stats_dict)
    spec_cfg = spec_cfg or SpectrogramConfig()
    X = prepare_batch(rows, range(len(rows)), audio_root, spec_cfg, stats, jobs=jobs)
    out = predict_in_batches(params, model_cfg, X)
    targets = targets_from_rows(rows)
    report = evaluate_predictions(
        out.valence, out.arousal, targets["valence"], targets["arousal"],
        out.emotion_probs.argmax(1), targets["emotion"],
        out.size_probs.argmax(1), targets["size"],
        out.gender_probs.argmax(1), targets["gender"],
        mae_mode=mae_mode,
    )
    return report, out


def run_ablation(
    kind: str,
    rows,
    audio_root,
    model_cfg: ModelConfig,
    train_cfg: TrainConfig,
    out_dir,
    spec_cfg: SpectrogramConfig | None = None,
    jobs: int = 1,
    log=None,
) -> dict:
    """Train `kind` (plus the va_only baseline when different) and emit Table-4-style rows."""
    if kind not in ABLATION_WEIGHTS:
        raise ConfigError(f"unknown ablation kind {kind!r}")
    kinds = [kind] if kind == "va_only" else ["va_only", kind]

    results = {}
    for k in kinds:
        run_dir = os.path.join(out_dir, k)
        if log:
            log(f"[experiment] training configuration {k!r}")
        t0 = time.perf_counter()
        res = train(
            rows, audio_root, model_cfg, train_cfg, run_dir,
            weights=ABLATION_WEIGHTS[k], spec_cfg=spec_cfg, jobs=jobs, log=log,
        )
        results[k] = {
            "va_mae": res.best_val_mae,
            "best_epoch": res.best_epoch,
            "stopped_epoch": res.stopped_epoch,
            "final_epoch": res.history[-1]["epoch"],
            "valence_r": res.history[res.best_epoch - 1]["val_valence_r"],
            "arousal_r": res.history[res.best_epoch - 1]["val_arousal_r"],
            "elapsed_s": time.perf_counter() - t0,
        }

    baseline = results["va_only"]["va_mae"]
    table = []
    for k in kinds:
        mae = results[k]["va_mae"]
        table.append({
            "configuration": k,
            "va_mae": mae,
            "improvement_pct": None if k == "va_only" else 100.0 * (baseline - mae) / baseline,
            "best_epoch": results[k]["best_epoch"],
        })

    report = {"kind": kind, "mae_mode": train_cfg.mae_mode, "runs": results, "table": table}
    _write_report(out_dir, report)
    _write_table_csv(
        os.path.join(out_dir, "ablation_table.csv"),
        ("configuration", "va_mae", "improvement_pct", "best_epoch"),
        table,
    )
    return report


def run_logo(
    rows,
    audio_root,
    model_cfg: ModelConfig,
    train_cfg: TrainConfig,
    out_dir,
    spec_cfg: SpectrogramConfig | None = None,
    jobs: int = 1,
    log=None,
) -> dict:
    """Leave-one-size-group-out: train on each group, test within and across."""
    missing = [r["id"] for r in rows if not r.get("size")]
    if missing:
        raise ConfigError(f"rows without size labels: {missing[:5]}")

    groups = {
        name: [r for r in rows if r["size"] in sizes]
        for name, sizes in LOGO_GROUPS.items()
    }
    for name, members in groups.items():
        if not members:
            raise SplitError(f"size group {name!r} is empty")

    directions = [("large", "small_medium"), ("small_medium", "large")]
    table = []
    for train_group, test_group in directions:
        run_dir = os.path.join(out_dir, f"train_{train_group}")
        if log:
            log(f"[experiment] LOGO: train on {train_group}, evaluate on {test_group}")
        res = train(
            groups[train_group], audio_root, model_cfg, train_cfg, run_dir,
            spec_cfg=spec_cfg, jobs=jobs, log=log,
        )
        # within-group reference: the held-out test split of the training group
        _, _, within_rows = stratified_split(groups[train_group], train_cfg.fractions, train_cfg.seed)
        within, _ = _evaluate_checkpoint(res.paths["best"], within_rows, audio_root, jobs, train_cfg.mae_mode)
        cross, _ = _evaluate_checkpoint(res.paths["best"], groups[test_group], audio_root, jobs, train_cfg.mae_mode)
        gap = (cross.va_mae - within.va_mae) / within.va_mae
        table.append({
            "direction": f"{train_group}->{test_group}",
            "va_mae": cross.va_mae,
            "valence_r": cross.valence_r,
            "arousal_r": cross.arousal_r,
            "within_va_mae": within.va_mae,
            "generalization_gap": gap,
        })

    report = {"kind": "logo", "mae_mode": train_cfg.mae_mode, "table": table}
    _write_report(out_dir, report)
    _write_table_csv(
        os.path.join(out_dir, "logo_table.csv"),
        ("direction", "va_mae", "valence_r", "arousal_r", "within_va_mae", "generalization_gap"),
        table,
    )
    return report


def run_experiment(kind, rows, audio_root, model_cfg, train_cfg, out_dir,
                   spec_cfg=None, jobs=1, log=None) -> dict:
    if kind == "logo":
        return run_logo(rows, audio_root, model_cfg, train_cfg, out_dir, spec_cfg, jobs, log)
    return run_ablation(kind, rows, audio_root, model_cfg, train_cfg, out_dir, spec_cfg, jobs, log)


def _write_report(out_dir, report) -> None:
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "report.json"), "w", encoding="utf-8") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _write_table_csv(path, fields, rows) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=fields)
        writer.writeheader()
        for row in rows:
            writer.writerow({k: ("" if row[k] is None else repr(row[k]) if isinstance(row[k], float) else row[k])
                             for k in fields})
