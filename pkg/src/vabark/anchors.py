"""Corpus-level quantile anchors that calibrate the label generator.

The arousal mapping needs the 5th/95th percentiles of per-clip rms_p95;
the valence score normalizes centroid, zcr and log_rms by their 10th/90th
percentiles. Anchors are fit once over a corpus and then frozen.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import AnchorFitError
from .features import AcousticFeatures

ANCHOR_FORMAT_VERSION = 1

_RMS_FLOOR = 1e-10


@dataclass(frozen=True)
class AnchorSet:
    a_low: float
    a_high: float
    centroid_q10: float
    centroid_q90: float
    zcr_q10: float
    zcr_q90: float
    log_rms_q10: float
    log_rms_q90: float

    def to_dict(self) -> dict:
        return {
            "a_low": self.a_low,
            "a_high": self.a_high,
            "centroid": {"q10": self.centroid_q10, "q90": self.centroid_q90},
            "zcr": {"q10": self.zcr_q10, "q90": self.zcr_q90},
            "log_rms": {"q10": self.log_rms_q10, "q90": self.log_rms_q90},
            "version": ANCHOR_FORMAT_VERSION,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "AnchorSet":
        return cls(
            a_low=float(d["a_low"]),
            a_high=float(d["a_high"]),
            centroid_q10=float(d["centroid"]["q10"]),
            centroid_q90=float(d["centroid"]["q90"]),
            zcr_q10=float(d["zcr"]["q10"]),
            zcr_q90=float(d["zcr"]["q90"]),
            log_rms_q10=float(d["log_rms"]["q10"]),
            log_rms_q90=float(d["log_rms"]["q90"]),
        )

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")

    @classmethod
    def load(cls, path) -> "AnchorSet":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


def fit_anchors(features: Sequence[AcousticFeatures], min_samples: int = 20) -> AnchorSet:
    """Fit quantile anchors over a corpus of per-clip features.

    Rejects corpora that are too small or where any referenced feature is
    (near-)constant, since a collapsed quantile range makes the
    normalizations undefined.
    """
    if len(features) < min_samples:
        raise AnchorFitError(f"need at least {min_samples} samples, got {len(features)}")

    rms = np.array([f.rms_p95 for f in features], dtype=np.float64)
    a_low = max(float(np.percentile(rms, 5.0)), _RMS_FLOOR)
    a_high = max(float(np.percentile(rms, 95.0)), _RMS_FLOOR)
    if not a_low < a_high:
        raise AnchorFitError("degenerate distribution for feature 'rms_p95' (a_low >= a_high)")

    pairs = {}
    for name in ("centroid", "zcr", "log_rms"):
        vals = np.array([getattr(f, name) for f in features], dtype=np.float64)
        q10 = float(np.percentile(vals, 10.0))
        q90 = float(np.percentile(vals, 90.0))
        if not q10 < q90:
            raise AnchorFitError(f"degenerate distribution for feature '{name}' (q10 >= q90)")
        pairs[name] = (q10, q90)

    return AnchorSet(
        a_low=a_low,
        a_high=a_high,
        centroid_q10=pairs["centroid"][0],
        centroid_q90=pairs["centroid"][1],
        zcr_q10=pairs["zcr"][0],
        zcr_q90=pairs["zcr"][1],
        log_rms_q10=pairs["log_rms"][0],
        log_rms_q90=pairs["log_rms"][1],
    )


def norm_feature(x: float, q10: float, q90: float) -> float:
    """Affine map sending [q10, q90] onto [-1, 1], hard-clipped outside."""
    y = 2.0 * (x - q10) / (q90 - q10) - 1.0
    return float(min(1.0, max(-1.0, y)))
