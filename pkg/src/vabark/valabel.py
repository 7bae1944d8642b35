"""Continuous valence-arousal labels from acoustics plus an emotion prior.

Arousal comes from a log mapping of near-peak frame energy between the
corpus anchors; valence adds an emotion-specific bias to a weighted score
of normalized centroid, log energy and zero-crossing rate, then clips.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Mapping

import numpy as np

from .anchors import AnchorSet, norm_feature
from .audio import SpectrogramConfig, Waveform
from .errors import ConfigError
from .features import AcousticFeatures, extract_features

EMOTIONS = (
    "fearful",
    "separation_anxiety",
    "anxious",
    "territorial",
    "alert",
    "playful",
    "content",
    "excited",
)

SIZES = ("large", "medium", "small")
GENDERS = ("male", "female")

# Shipped default biases; override tables are validated against the same
# ordering constraint (most negative emotion first).
DEFAULT_EMOTION_BIAS = {
    "fearful": -0.18,
    "separation_anxiety": -0.16,
    "anxious": -0.12,
    "territorial": -0.08,
    "alert": -0.02,
    "playful": 0.10,
    "content": 0.12,
    "excited": 0.14,
}

# Weights on (centroid, log_rms, zcr) after [-1, 1] normalization. The
# energy term is deliberately negative: very loud clips signal distress.
SCORE_WEIGHTS = (0.45, -0.35, 0.25)

_RMS_FLOOR = 1e-10


@dataclass(frozen=True)
class VALabel:
    valence: float
    arousal: float

    def __post_init__(self):
        if not (np.isfinite(self.valence) and -1.0 <= self.valence <= 1.0):
            raise ConfigError(f"valence {self.valence} outside [-1, 1]")
        if not (np.isfinite(self.arousal) and 0.0 <= self.arousal <= 1.0):
            raise ConfigError(f"arousal {self.arousal} outside [0, 1]")


def validate_bias_table(table: Mapping[str, float]) -> dict:
    if set(table.keys()) != set(EMOTIONS):
        missing = set(EMOTIONS) - set(table.keys())
        extra = set(table.keys()) - set(EMOTIONS)
        raise ConfigError(f"bias table keys wrong; missing={sorted(missing)} extra={sorted(extra)}")
    vals = [float(table[e]) for e in EMOTIONS]
    if any(not -1.0 <= v <= 1.0 for v in vals):
        raise ConfigError("bias values must lie in [-1, 1]")
    if any(a >= b for a, b in zip(vals, vals[1:])):
        raise ConfigError(f"bias values must increase along {EMOTIONS}")
    return {e: float(table[e]) for e in EMOTIONS}


def load_bias_table(path) -> dict:
    with open(path, "r", encoding="utf-8") as fh:
        return validate_bias_table(json.load(fh))


def compute_arousal(rms_p95: float, anchors: AnchorSet) -> float:
    """Log-scaled energy between the corpus anchors, clipped to [0, 1]."""
    r = max(float(rms_p95), _RMS_FLOOR)
    num = np.log(r) - np.log(anchors.a_low)
    den = np.log(anchors.a_high) - np.log(anchors.a_low)
    return float(min(1.0, max(0.0, num / den)))


def acoustic_score(f: AcousticFeatures, anchors: AnchorSet) -> float:
    """Weighted sum of the three normalized spectral features (pre-clip)."""
    c = norm_feature(f.centroid, anchors.centroid_q10, anchors.centroid_q90)
    r = norm_feature(f.log_rms, anchors.log_rms_q10, anchors.log_rms_q90)
    z = norm_feature(f.zcr, anchors.zcr_q10, anchors.zcr_q90)
    wc, wr, wz = SCORE_WEIGHTS
    return wc * c + wr * r + wz * z


def compute_valence(s_acoustic: float, emotion: str, table: Mapping[str, float] | None = None) -> float:
    """Acoustic score plus the emotion bias, clipped to [-1, 1]."""
    table = DEFAULT_EMOTION_BIAS if table is None else table
    if emotion not in table:
        raise KeyError(f"unknown emotion {emotion!r}; expected one of {EMOTIONS}")
    v = s_acoustic + table[emotion]
    return float(min(1.0, max(-1.0, v)))


def generate_va_label(
    w: Waveform,
    emotion: str,
    anchors: AnchorSet,
    cfg: SpectrogramConfig,
    bias_table: Mapping[str, float] | None = None,
) -> VALabel:
    """Full labeling pass for one clip: features, arousal, score, bias, clip."""
    f = extract_features(w, cfg)
    return label_from_features(f, emotion, anchors, bias_table)


def label_from_features(
    f: AcousticFeatures,
    emotion: str,
    anchors: AnchorSet,
    bias_table: Mapping[str, float] | None = None,
) -> VALabel:
    arousal = compute_arousal(f.rms_p95, anchors)
    valence = compute_valence(acoustic_score(f, anchors), emotion, bias_table)
    return VALabel(valence=valence, arousal=arousal)
