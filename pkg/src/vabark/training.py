"""Multi-task training: loss, optimizer, schedule, splits, and the epoch loop.

The loop is deterministic end to end: shuffling, augmentation and dropout
each draw from generators derived from (seed, purpose, epoch, index), so a
run is reproducible sample-for-sample regardless of the worker count used
for batch preparation.
"""

from __future__ import annotations

import csv
import json
import math
import os
from dataclasses import asdict, dataclass, field

import numpy as np

from .audio import SpectrogramConfig, load_wav, mel_spectrogram_batch, standardize_duration
from .augment import augment
from .checkpoint import save_checkpoint
from .errors import ConfigError, SplitError, TrainingDivergedError
from .metrics import DegenerateInputError, pearson_r, va_mae
from .model import ModelConfig, ModelOutput, backward, forward, init_params
from .parallel import derived_rng, ordered_map
from .valabel import EMOTIONS, GENDERS, SIZES


@dataclass(frozen=True)
class LossWeights:
    w_v: float = 1.0
    w_a: float = 1.0
    w_e: float = 0.3
    w_s: float = 0.2
    w_g: float = 0.1

    def __post_init__(self):
        if any(w < 0 for w in asdict(self).values()):
            raise ConfigError("loss weights must be non-negative")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d) -> "LossWeights":
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown loss weight keys: {sorted(unknown)}")
        return cls(**d)


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 40
    batch_size: int = 32
    lr: float = 1e-4
    weight_decay: float = 1e-5
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t_max: int = 40
    lr_min: float = 1e-6
    patience: int = 8
    min_delta: float = 0.001
    seed: int = 42
    p_time_stretch: float = 0.5
    p_pitch_shift: float = 0.5
    train_frac: float = 0.70
    val_frac: float = 0.15
    test_frac: float = 0.15
    mae_mode: str = "eq6"
    per_bin_norm: bool = False

    def __post_init__(self):
        if abs(self.train_frac + self.val_frac + self.test_frac - 1.0) > 1e-9:
            raise ConfigError("split fractions must sum to 1")
        if self.patience < 1 or self.epochs < 1 or self.batch_size < 1:
            raise ConfigError("patience, epochs and batch_size must be >= 1")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d) -> "TrainConfig":
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown train config keys: {sorted(unknown)}")
        return cls(**d)

    @property
    def fractions(self):
        return (self.train_frac, self.val_frac, self.test_frac)


@dataclass
class NormStats:
    """Z-score statistics over training-set mel cells (global scalars by default)."""

    mean: float | list
    std: float | list
    per_bin: bool = False

    def apply(self, spec: np.ndarray) -> np.ndarray:
        if self.per_bin:
            mu = np.asarray(self.mean, dtype=spec.dtype)[:, None]
            sd = np.asarray(self.std, dtype=spec.dtype)[:, None]
            return (spec - mu) / sd
        return (spec - spec.dtype.type(self.mean)) / spec.dtype.type(self.std)

    def to_dict(self) -> dict:
        return {"mean": self.mean, "std": self.std, "per_bin": self.per_bin}

    @classmethod
    def from_dict(cls, d) -> "NormStats":
        return cls(mean=d["mean"], std=d["std"], per_bin=bool(d.get("per_bin", False)))

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")


# ---------------------------------------------------------------------------
# loss
# ---------------------------------------------------------------------------

_PROB_FLOOR = 1e-12


def targets_from_rows(rows) -> dict:
    return {
        "valence": np.array([float(r["valence"]) for r in rows]),
        "arousal": np.array([float(r["arousal"]) for r in rows]),
        "emotion": np.array([EMOTIONS.index(r["emotion"]) for r in rows]),
        "size": np.array([SIZES.index(r["size"]) for r in rows]),
        "gender": np.array([GENDERS.index(r["gender"]) for r in rows]),
    }


def _check_indices(idx, n_classes, name):
    idx = np.asarray(idx)
    if idx.size and (idx.min() < 0 or idx.max() >= n_classes):
        raise ConfigError(f"{name} class index out of range [0, {n_classes})")
    return idx


def multitask_loss(out: ModelOutput, targets: dict, weights: LossWeights):
    """Weighted sum of batch-mean MSE (valence, arousal) and CE (aux heads).

    Returns (total, components) where components holds the unweighted
    per-task losses, so total == sum(w_i * components_i) identically.
    """
    b = out.valence.shape[0]
    rows = np.arange(b)
    e_idx = _check_indices(targets["emotion"], out.emotion_probs.shape[1], "emotion")
    s_idx = _check_indices(targets["size"], out.size_probs.shape[1], "size")
    g_idx = _check_indices(targets["gender"], out.gender_probs.shape[1], "gender")

    comps = {
        "valence": float(np.mean((out.valence - targets["valence"]) ** 2)),
        "arousal": float(np.mean((out.arousal - targets["arousal"]) ** 2)),
        "emotion": float(-np.mean(np.log(np.maximum(out.emotion_probs[rows, e_idx], _PROB_FLOOR)))),
        "size": float(-np.mean(np.log(np.maximum(out.size_probs[rows, s_idx], _PROB_FLOOR)))),
        "gender": float(-np.mean(np.log(np.maximum(out.gender_probs[rows, g_idx], _PROB_FLOOR)))),
    }
    total = (
        weights.w_v * comps["valence"]
        + weights.w_a * comps["arousal"]
        + weights.w_e * comps["emotion"]
        + weights.w_s * comps["size"]
        + weights.w_g * comps["gender"]
    )
    return total, comps


def loss_output_grads(out: ModelOutput, targets: dict, weights: LossWeights) -> dict:
    """Gradients of the weighted loss w.r.t. model outputs / head logits."""
    b = out.valence.shape[0]
    rows = np.arange(b)

    def ce_grad(probs, idx, w):
        g = probs * (w / b)
        g[rows, idx] -= w / b
        return g

    return {
        "d_valence": weights.w_v * 2.0 * (out.valence - targets["valence"]) / b,
        "d_arousal": weights.w_a * 2.0 * (out.arousal - targets["arousal"]) / b,
        "d_emotion_logits": ce_grad(out.emotion_probs, targets["emotion"], weights.w_e),
        "d_size_logits": ce_grad(out.size_probs, targets["size"], weights.w_s),
        "d_gender_logits": ce_grad(out.gender_probs, targets["gender"], weights.w_g),
    }


# ---------------------------------------------------------------------------
# optimizer and schedule
# ---------------------------------------------------------------------------


def init_adamw_state(params) -> dict:
    return {
        "step": 0,
        "m": {k: np.zeros_like(v) for k, v in params.items()},
        "v": {k: np.zeros_like(v) for k, v in params.items()},
    }


def adamw_step(params, grads, state, lr, weight_decay=0.0, beta1=0.9, beta2=0.999, eps=1e-8):
    """One decoupled-weight-decay Adam update; returns (new_params, state)."""
    state["step"] += 1
    t = state["step"]
    bc1 = 1.0 - beta1**t
    bc2 = 1.0 - beta2**t
    new_params = {}
    for name, p in params.items():
        g = grads[name]
        m = state["m"][name]
        v = state["v"][name]
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * g * g
        update = (m / bc1) / (np.sqrt(v / bc2) + eps)
        new_params[name] = p - lr * update - lr * weight_decay * p
    return new_params, state


def cosine_lr(epoch: int, t_max: int, lr0: float, lr_min: float) -> float:
    """Cosine annealing over epochs; epoch 0 gives lr0, epoch t_max gives lr_min."""
    if epoch < 0:
        raise ConfigError("epoch must be non-negative")
    e = min(epoch, t_max)
    return lr_min + 0.5 * (lr0 - lr_min) * (1.0 + math.cos(math.pi * e / t_max))


# ---------------------------------------------------------------------------
# splits and early stopping
# ---------------------------------------------------------------------------


def stratified_split(rows, fractions, seed: int):
    """Per-emotion largest-remainder allocation into train/val/test."""
    if len(fractions) != 3 or abs(sum(fractions) - 1.0) > 1e-9 or any(f < 0 for f in fractions):
        raise SplitError("fractions must be three non-negative values summing to 1")
    by_class = {}
    for row in rows:
        by_class.setdefault(row["emotion"], []).append(row)

    out = ([], [], [])
    for class_idx, emotion in enumerate(EMOTIONS):
        members = by_class.pop(emotion, None)
        if members is None:
            continue
        if len(members) < 3:
            raise SplitError(f"emotion class {emotion!r} has {len(members)} samples; need >= 3")
        quotas = [len(members) * f for f in fractions]
        counts = [int(q) for q in quotas]
        short = len(members) - sum(counts)
        order = sorted(range(3), key=lambda i: (-(quotas[i] - counts[i]), i))
        for i in order[:short]:
            counts[i] += 1
        perm = derived_rng(seed, "split", class_idx).permutation(len(members))
        shuffled = [members[i] for i in perm]
        start = 0
        for bucket, c in zip(out, counts):
            bucket.extend(shuffled[start:start + c])
            start += c
    if by_class:
        raise SplitError(f"unknown emotions in manifest: {sorted(by_class)}")
    return out


class EarlyStopper:
    """Stop after `patience` epochs without improving best-so-far by min_delta."""

    def __init__(self, patience: int, min_delta: float):
        self.patience = patience
        self.min_delta = min_delta
        self.best = math.inf
        self.stagnant = 0

    def observe(self, value: float) -> bool:
        if value < self.best - self.min_delta:
            self.best = value
            self.stagnant = 0
        else:
            self.stagnant += 1
        return self.stagnant >= self.patience

    @classmethod
    def trace(cls, values, patience: int, min_delta: float):
        """Replay a validation-metric sequence; returns (stop_epoch, best_epoch).

        stop_epoch is None when the sequence runs out before triggering.
        best_epoch is the first strict argmin, i.e. the retained checkpoint.
        """
        stopper = cls(patience, min_delta)
        best = math.inf
        best_epoch = None
        for epoch, value in enumerate(values, start=1):
            if value < best:
                best = value
                best_epoch = epoch
            if stopper.observe(value):
                return epoch, best_epoch
        return None, best_epoch


# ---------------------------------------------------------------------------
# data plumbing
# ---------------------------------------------------------------------------


def _load_standardized(path: str, spec_cfg: SpectrogramConfig):
    w = load_wav(path)
    return standardize_duration(w, spec_cfg.target_duration, spec_cfg.sample_rate)


def fit_norm_stats(rows, audio_root, spec_cfg, per_bin=False, jobs=1) -> NormStats:
    """Mean/std over all mel cells of the (unaugmented) training rows."""

    def one(row):
        w = _load_standardized(os.path.join(audio_root, row["path"]), spec_cfg)
        return mel_spectrogram_batch(w.samples[None, :], spec_cfg, dtype=np.float64)[0]

    count = 0.0
    total = 0.0
    total_sq = 0.0
    if per_bin:
        total = np.zeros(spec_cfg.n_mels)
        total_sq = np.zeros(spec_cfg.n_mels)
    for spec in ordered_map(one, rows, jobs=jobs):
        if per_bin:
            total += spec.sum(axis=1)
            total_sq += (spec**2).sum(axis=1)
            count += spec.shape[1]
        else:
            total += float(spec.sum())
            total_sq += float((spec**2).sum())
            count += spec.size
    mean = total / count
    var = total_sq / count - mean**2
    std = np.sqrt(np.maximum(var, 1e-12))
    if per_bin:
        return NormStats(mean=mean.tolist(), std=std.tolist(), per_bin=True)
    return NormStats(mean=float(mean), std=float(std), per_bin=False)


def prepare_batch(
    rows, ds_indices, audio_root, spec_cfg, stats, *,
    train_cfg=None, epoch=0, augment_enabled=False, jobs=1,
) -> np.ndarray:
    """Load, optionally augment, and normalize one batch -> [B, n_mels, T] float32."""

    def one(args):
        row, ds_index = args
        w = _load_standardized(os.path.join(audio_root, row["path"]), spec_cfg)
        if augment_enabled:
            rng = derived_rng(train_cfg.seed, "augment", epoch, ds_index)
            w = augment(
                w, rng,
                p_time_stretch=train_cfg.p_time_stretch,
                p_pitch_shift=train_cfg.p_pitch_shift,
                target_duration=spec_cfg.target_duration,
            )
        return w.samples

    signals = ordered_map(one, list(zip(rows, ds_indices)), jobs=jobs)
    specs = mel_spectrogram_batch(np.stack(signals), spec_cfg)
    return stats.apply(specs)


def predict_in_batches(params, cfg, X, batch_size=32) -> ModelOutput:
    outs = []
    for start in range(0, X.shape[0], batch_size):
        out, _ = forward(params, cfg, X[start:start + batch_size], need_cache=False)
        outs.append(out)
    return ModelOutput(
        valence=np.concatenate([o.valence for o in outs]),
        arousal=np.concatenate([o.arousal for o in outs]),
        emotion_probs=np.concatenate([o.emotion_probs for o in outs]),
        size_probs=np.concatenate([o.size_probs for o in outs]),
        gender_probs=np.concatenate([o.gender_probs for o in outs]),
    )


# ---------------------------------------------------------------------------
# the training loop
# ---------------------------------------------------------------------------

HISTORY_FIELDS = (
    "epoch", "lr", "train_loss", "val_loss", "val_va_mae",
    "val_valence_mae", "val_arousal_mae", "val_valence_r", "val_arousal_r",
    "val_emotion_acc", "val_size_acc", "val_gender_acc",
)


@dataclass
class TrainResult:
    history: list
    best_epoch: int
    best_val_mae: float
    stopped_epoch: int | None
    splits: dict
    paths: dict = field(default_factory=dict)


def _safe_r(x, y) -> float:
    try:
        return pearson_r(x, y)
    except DegenerateInputError:
        return float("nan")


def _val_metrics(out: ModelOutput, targets, weights, mae_mode):
    val_loss, _ = multitask_loss(out, targets, weights)
    pairs_p = list(zip(out.valence, out.arousal))
    pairs_t = list(zip(targets["valence"], targets["arousal"]))
    return {
        "val_loss": val_loss,
        "val_va_mae": va_mae(pairs_p, pairs_t, mode=mae_mode),
        "val_valence_mae": float(np.mean(np.abs(out.valence - targets["valence"]))),
        "val_arousal_mae": float(np.mean(np.abs(out.arousal - targets["arousal"]))),
        "val_valence_r": _safe_r(out.valence, targets["valence"]),
        "val_arousal_r": _safe_r(out.arousal, targets["arousal"]),
        "val_emotion_acc": float(np.mean(out.emotion_probs.argmax(1) == targets["emotion"])),
        "val_size_acc": float(np.mean(out.size_probs.argmax(1) == targets["size"])),
        "val_gender_acc": float(np.mean(out.gender_probs.argmax(1) == targets["gender"])),
    }


def write_history_csv(path, history) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(HISTORY_FIELDS)
        for row in history:
            writer.writerow([repr(row[k]) if isinstance(row[k], float) else row[k] for k in HISTORY_FIELDS])


def train(
    rows,
    audio_root: str,
    model_cfg: ModelConfig,
    train_cfg: TrainConfig,
    out_dir: str,
    weights: LossWeights | None = None,
    spec_cfg: SpectrogramConfig | None = None,
    jobs: int = 1,
    log=None,
) -> TrainResult:
    """Train on a labeled manifest; writes history/checkpoints/stats under out_dir."""
    weights = weights or LossWeights()
    spec_cfg = spec_cfg or SpectrogramConfig()
    if model_cfg.input_dim != spec_cfg.n_mels:
        raise ConfigError("model input_dim must equal the mel band count")
    if not all("valence" in r and "arousal" in r for r in rows):
        raise ConfigError("training needs a labeled manifest (valence/arousal on every row)")
    os.makedirs(out_dir, exist_ok=True)

    train_rows, val_rows, test_rows = stratified_split(rows, train_cfg.fractions, train_cfg.seed)
    splits = {
        "train": [r["id"] for r in train_rows],
        "val": [r["id"] for r in val_rows],
        "test": [r["id"] for r in test_rows],
    }
    with open(os.path.join(out_dir, "splits.json"), "w", encoding="utf-8") as fh:
        json.dump(splits, fh, indent=2, sort_keys=True)
        fh.write("\n")

    stats = fit_norm_stats(train_rows, audio_root, spec_cfg, per_bin=train_cfg.per_bin_norm, jobs=jobs)
    stats.save(os.path.join(out_dir, "norm_stats.json"))

    val_X = prepare_batch(val_rows, range(len(val_rows)), audio_root, spec_cfg, stats, jobs=jobs)
    val_targets = targets_from_rows(val_rows)
    train_targets_all = targets_from_rows(train_rows)

    params = init_params(model_cfg, train_cfg.seed)
    state = init_adamw_state(params)
    stopper = EarlyStopper(train_cfg.patience, train_cfg.min_delta)

    history = []
    best_mae = math.inf
    best_epoch = None
    stopped_epoch = None
    best_path = os.path.join(out_dir, "best.ckpt")
    last_path = os.path.join(out_dir, "last.ckpt")
    n_train = len(train_rows)

    for epoch in range(1, train_cfg.epochs + 1):
        lr = cosine_lr(epoch - 1, train_cfg.t_max, train_cfg.lr, train_cfg.lr_min)
        order = derived_rng(train_cfg.seed, "shuffle", epoch).permutation(n_train)
        loss_sum = 0.0
        for step, start in enumerate(range(0, n_train, train_cfg.batch_size)):
            idx = order[start:start + train_cfg.batch_size]
            batch_rows = [train_rows[i] for i in idx]
            X = prepare_batch(
                batch_rows, idx, audio_root, spec_cfg, stats,
                train_cfg=train_cfg, epoch=epoch, augment_enabled=True, jobs=jobs,
            )
            targets = {k: v[idx] for k, v in train_targets_all.items()}
            drop_rng = derived_rng(train_cfg.seed, "dropout", epoch, step)
            out, cache = forward(params, model_cfg, X, train_mode=True, rng=drop_rng)
            total, comps = multitask_loss(out, targets, weights)
            if not math.isfinite(total):
                snap = {"epoch": epoch, "step": step, "lr": lr, "total": total, "components": comps}
                with open(os.path.join(out_dir, "diagnostic_nan.json"), "w", encoding="utf-8") as fh:
                    json.dump(snap, fh, indent=2)
                raise TrainingDivergedError(f"non-finite loss at epoch {epoch} step {step}")
            grads = backward(params, model_cfg, cache, loss_output_grads(out, targets, weights))
            params, state = adamw_step(
                params, grads, state, lr,
                weight_decay=train_cfg.weight_decay,
                beta1=train_cfg.beta1, beta2=train_cfg.beta2, eps=train_cfg.eps,
            )
            loss_sum += total * len(idx)

        val_out = predict_in_batches(params, model_cfg, val_X, train_cfg.batch_size)
        row = {"epoch": epoch, "lr": lr, "train_loss": loss_sum / n_train}
        row.update(_val_metrics(val_out, val_targets, weights, train_cfg.mae_mode))
        history.append(row)
        if log:
            log(
                f"epoch {epoch:3d} lr {lr:.2e} train {row['train_loss']:.4f} "
                f"val {row['val_loss']:.4f} va_mae {row['val_va_mae']:.4f} "
                f"v_r {row['val_valence_r']:.3f} a_r {row['val_arousal_r']:.3f}"
            )

        if row["val_va_mae"] < best_mae:
            best_mae = row["val_va_mae"]
            best_epoch = epoch
            save_checkpoint(
                best_path, params, model_cfg, norm_stats=stats.to_dict(), spec_cfg=spec_cfg,
                extra={"epoch": epoch, "val_va_mae": best_mae, "weights": weights.to_dict()},
            )
        if stopper.observe(row["val_va_mae"]):
            stopped_epoch = epoch
            break

    save_checkpoint(
        last_path, params, model_cfg, norm_stats=stats.to_dict(), spec_cfg=spec_cfg,
        extra={"epoch": history[-1]["epoch"], "val_va_mae": history[-1]["val_va_mae"],
               "weights": weights.to_dict()},
    )
    write_history_csv(os.path.join(out_dir, "history.csv"), history)

    return TrainResult(
        history=history,
        best_epoch=best_epoch,
        best_val_mae=best_mae,
        stopped_epoch=stopped_epoch,
        splits=splits,
        paths={"best": best_path, "last": last_path,
               "history": os.path.join(out_dir, "history.csv"),
               "norm_stats": os.path.join(out_dir, "norm_stats.json"),
               "splits": os.path.join(out_dir, "splits.json")},
    )
