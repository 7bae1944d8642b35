"""Scalar acoustic features feeding the label generator.

All four features are computed on the standardized waveform so values are
comparable across a corpus: peak-ish frame energy (95th percentile RMS),
spectral centroid, zero-crossing rate and log mean RMS.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .audio import LOG_EPS, SpectrogramConfig, Waveform, frame_centered, power_stft
from .errors import ConfigError


@dataclass(frozen=True)
class AcousticFeatures:
    rms_p95: float
    centroid: float
    zcr: float
    log_rms: float

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "AcousticFeatures":
        return cls(
            rms_p95=float(d["rms_p95"]),
            centroid=float(d["centroid"]),
            zcr=float(d["zcr"]),
            log_rms=float(d["log_rms"]),
        )


def frame_rms(w: Waveform, frame_len: int = 2048, hop: int = 512) -> np.ndarray:
    """Per-frame sqrt(mean(x^2)) over centered frames (reflect padded)."""
    if frame_len <= 0 or hop <= 0:
        raise ConfigError("frame_len and hop must be positive")
    frames = frame_centered(w.samples, frame_len, hop)
    return np.sqrt(np.mean(frames**2, axis=-1))


def rms_p95(frames: np.ndarray) -> float:
    """95th percentile of frame RMS, linear interpolation between order statistics."""
    frames = np.asarray(frames, dtype=np.float64)
    if frames.size == 0:
        raise ConfigError("rms_p95 needs at least one frame")
    return float(np.percentile(frames, 95.0))


def spectral_centroid(w: Waveform, cfg: SpectrogramConfig) -> float:
    """Magnitude-weighted mean frequency, averaged over non-silent frames.

    Frames whose total magnitude falls below 1e-12 are excluded; an
    all-silent input returns 0.
    """
    power = power_stft(w.samples, cfg.n_fft, cfg.hop)  # [n_bins, T]
    mag = np.sqrt(power)
    freqs = np.fft.rfftfreq(cfg.n_fft, d=1.0 / w.sample_rate)
    totals = mag.sum(axis=0)
    keep = totals >= 1e-12
    if not np.any(keep):
        return 0.0
    per_frame = (freqs[:, None] * mag[:, keep]).sum(axis=0) / totals[keep]
    return float(per_frame.mean())


def zero_crossing_rate(w: Waveform) -> float:
    """Fraction of consecutive sample pairs that change sign; zeros carry the previous sign."""
    x = w.samples
    if x.size < 2:
        return 0.0
    s = np.sign(x)
    nz = s != 0
    # forward-fill zero signs; leading zeros count as positive
    idx = np.where(nz, np.arange(x.size), -1)
    idx = np.maximum.accumulate(idx)
    filled = np.where(idx >= 0, s[np.maximum(idx, 0)], 1.0)
    changes = np.count_nonzero(filled[1:] != filled[:-1])
    return changes / (x.size - 1)


def log_rms(frames: np.ndarray) -> float:
    """Natural log of mean frame RMS, floored so silence stays finite."""
    frames = np.asarray(frames, dtype=np.float64)
    if frames.size == 0:
        raise ConfigError("log_rms needs at least one frame")
    return float(np.log(np.mean(frames) + LOG_EPS))


def extract_features(w: Waveform, cfg: SpectrogramConfig) -> AcousticFeatures:
    """All scalar features used by the label generator, in one deterministic pass."""
    frames = frame_rms(w, cfg.n_fft, cfg.hop)
    return AcousticFeatures(
        rms_p95=rms_p95(frames),
        centroid=spectral_centroid(w, cfg),
        zcr=zero_crossing_rate(w),
        log_rms=log_rms(frames),
    )
