"""Evaluation metrics and report emission.

Two MAE conventions ship side by side: `eq6` sums the valence and arousal
absolute errors per sample before averaging; `mean2` halves that, matching
the "averaged over both dimensions" reading. Every report records which
one it used.
"""

from __future__ import annotations

import csv
import json
import math
import os
import shutil
from dataclasses import asdict, dataclass

import numpy as np

from .errors import ConfigError, DegenerateInputError

MAE_MODES = ("eq6", "mean2")

REPORT_SCHEMA_VERSION = 1


@dataclass(frozen=True)
class EvalReport:
    va_mae: float
    valence_mae: float
    arousal_mae: float
    valence_r: float
    arousal_r: float
    emotion_acc: float
    size_acc: float
    gender_acc: float
    n_samples: int
    mae_mode: str

    def to_dict(self) -> dict:
        d = asdict(self)
        d["schema_version"] = REPORT_SCHEMA_VERSION
        return d


def _va_arrays(pairs):
    arr = np.array([(p.valence, p.arousal) if hasattr(p, "valence") else (p[0], p[1]) for p in pairs],
                   dtype=np.float64)
    return arr[:, 0], arr[:, 1]


def va_mae(pred, truth, mode: str = "eq6") -> float:
    """Aggregate absolute VA error: per-sample |dv| + |da|, averaged; halved in mean2 mode."""
    if mode not in MAE_MODES:
        raise ConfigError(f"mae mode must be one of {MAE_MODES}")
    if len(pred) != len(truth):
        raise ConfigError(f"length mismatch: {len(pred)} vs {len(truth)}")
    if len(pred) == 0:
        raise ConfigError("va_mae needs at least one sample")
    pv, pa = _va_arrays(pred)
    tv, ta = _va_arrays(truth)
    per_sample = np.abs(pv - tv) + np.abs(pa - ta)
    total = float(per_sample.mean())
    return total / 2.0 if mode == "mean2" else total


def pearson_r(x, y) -> float:
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise ConfigError("pearson_r needs two equal-length 1-D sequences")
    if x.size < 2:
        raise ConfigError("pearson_r needs at least two points")
    dx = x - x.mean()
    dy = y - y.mean()
    sx = float(np.sum(dx * dx))
    sy = float(np.sum(dy * dy))
    if sx == 0.0 or sy == 0.0:
        raise DegenerateInputError("pearson_r is undefined for a constant sequence")
    return float(np.sum(dx * dy) / math.sqrt(sx * sy))


def accuracy(pred_classes, true_classes) -> float:
    pred = np.asarray(pred_classes)
    true = np.asarray(true_classes)
    if pred.shape != true.shape:
        raise ConfigError("accuracy: length mismatch")
    if pred.size == 0:
        raise ConfigError("accuracy needs at least one sample")
    return float(np.mean(pred == true))


def evaluate_predictions(
    pred_v, pred_a, true_v, true_a,
    pred_emotion, true_emotion, pred_size, true_size, pred_gender, true_gender,
    mae_mode: str = "eq6",
) -> EvalReport:
    pairs_p = list(zip(pred_v, pred_a))
    pairs_t = list(zip(true_v, true_a))
    pv = np.asarray(pred_v, dtype=np.float64)
    tv = np.asarray(true_v, dtype=np.float64)
    pa = np.asarray(pred_a, dtype=np.float64)
    ta = np.asarray(true_a, dtype=np.float64)
    return EvalReport(
        va_mae=va_mae(pairs_p, pairs_t, mode=mae_mode),
        valence_mae=float(np.mean(np.abs(pv - tv))),
        arousal_mae=float(np.mean(np.abs(pa - ta))),
        valence_r=pearson_r(pv, tv),
        arousal_r=pearson_r(pa, ta),
        emotion_acc=accuracy(pred_emotion, true_emotion),
        size_acc=accuracy(pred_size, true_size),
        gender_acc=accuracy(pred_gender, true_gender),
        n_samples=len(pairs_p),
        mae_mode=mae_mode,
    )


SCATTER_FIELDS = ("id", "pred_v", "true_v", "pred_a", "true_a", "emotion", "size", "gender")


def va_report_from_scatter(rows, mae_mode: str = "eq6") -> dict:
    """VA-only metrics recomputed from scatter rows (no head predictions there)."""
    if not rows:
        raise ConfigError("empty scatter data")
    pv = np.array([r["pred_v"] for r in rows])
    tv = np.array([r["true_v"] for r in rows])
    pa = np.array([r["pred_a"] for r in rows])
    ta = np.array([r["true_a"] for r in rows])
    return {
        "schema_version": REPORT_SCHEMA_VERSION,
        "derived_from": "va_scatter",
        "va_mae": va_mae(list(zip(pv, pa)), list(zip(tv, ta)), mode=mae_mode),
        "valence_mae": float(np.mean(np.abs(pv - tv))),
        "arousal_mae": float(np.mean(np.abs(pa - ta))),
        "valence_r": pearson_r(pv, tv),
        "arousal_r": pearson_r(pa, ta),
        "n_samples": len(rows),
        "mae_mode": mae_mode,
    }


def emit_report(report, scatter_rows, out_dir, history_src=None) -> dict:
    """Write report.json, va_scatter.csv and top_errors.csv (worst 5% by VA error).

    Validates everything before touching the filesystem so a bad call
    leaves no partial output. Returns the written paths.
    """
    rows = list(scatter_rows)
    if not rows:
        raise ConfigError("emit_report: empty evaluation set")
    for r in rows:
        missing = [f for f in SCATTER_FIELDS if f not in r]
        if missing:
            raise ConfigError(f"scatter row missing fields {missing}")
    if history_src is not None and not os.path.exists(history_src):
        raise ConfigError(f"history file {history_src} does not exist")

    os.makedirs(out_dir, exist_ok=True)
    paths = {}

    report_path = os.path.join(out_dir, "report.json")
    report_dict = report.to_dict() if hasattr(report, "to_dict") else dict(report)
    with open(report_path, "w", encoding="utf-8") as fh:
        json.dump(report_dict, fh, indent=2, sort_keys=True)
        fh.write("\n")
    paths["report"] = report_path

    scatter_path = os.path.join(out_dir, "va_scatter.csv")
    with open(scatter_path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=SCATTER_FIELDS)
        writer.writeheader()
        for r in rows:
            writer.writerow({f: r[f] for f in SCATTER_FIELDS})
    paths["scatter"] = scatter_path

    errs = [abs(r["pred_v"] - r["true_v"]) + abs(r["pred_a"] - r["true_a"]) for r in rows]
    k = math.ceil(0.05 * len(rows))
    order = sorted(range(len(rows)), key=lambda i: (-errs[i], rows[i]["id"]))[:k]
    top_path = os.path.join(out_dir, "top_errors.csv")
    with open(top_path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=SCATTER_FIELDS + ("va_error",))
        writer.writeheader()
        for i in order:
            row = {f: rows[i][f] for f in SCATTER_FIELDS}
            row["va_error"] = repr(errs[i])
            writer.writerow(row)
    paths["top_errors"] = top_path

    if history_src is not None:
        hist_path = os.path.join(out_dir, "history.csv")
        if os.path.abspath(history_src) != os.path.abspath(hist_path):
            shutil.copyfile(history_src, hist_path)
        paths["history"] = hist_path
    return paths


def read_scatter(path) -> list[dict]:
    rows = []
    with open(path, "r", encoding="utf-8", newline="") as fh:
        for r in csv.DictReader(fh):
            rows.append({
                "id": r["id"],
                "pred_v": float(r["pred_v"]), "true_v": float(r["true_v"]),
                "pred_a": float(r["pred_a"]), "true_a": float(r["true_a"]),
                "emotion": r["emotion"], "size": r["size"], "gender": r["gender"],
            })
    return rows
