"""Waveform augmentation: tempo change and pitch shift.

Time stretching uses plain granular overlap-add with Hann grains at 50%
overlap; no phase vocoder. That leaves mild graininess which is irrelevant
at this fidelity level. Pitch shifting composes a stretch with linear
resampling so duration is preserved while pitch moves by 2^(semitones/12).
"""

from __future__ import annotations

import numpy as np

from .audio import Waveform, hann_window, standardize_duration
from .errors import ConfigError

STRETCH_RANGE = (0.9, 1.1)
PITCH_RANGE_SEMITONES = 2.0

_GRAIN = 2048


_SEARCH = 512  # alignment tolerance in samples (~12 ms at 44.1 kHz)


def time_stretch(x: np.ndarray, rate: float) -> np.ndarray:
    """Change tempo by `rate` (>1 speeds up) without changing pitch.

    Grains are placed on the output grid and, past the first one, their
    input position is fine-tuned within +-_SEARCH samples to maximize
    correlation with the natural continuation of the previous grain.
    Without that alignment, overlap-add of coherent partials smears the
    pitch at strong stretch factors.
    """
    if rate <= 0:
        raise ConfigError("stretch rate must be positive")
    if rate == 1.0:
        return x.copy()
    n_in = x.size
    n_out = max(int(round(n_in / rate)), _GRAIN)
    hop = _GRAIN // 2
    win = hann_window(_GRAIN)

    out = np.zeros(n_out + _GRAIN)
    wsum = np.zeros(n_out + _GRAIN)
    xp = np.pad(x, (0, 2 * _GRAIN + _SEARCH))
    t_out = 0
    prev_s = 0
    while t_out < n_out:
        if t_out == 0:
            s = 0
        else:
            target = min(int(round(t_out * rate)), n_in - 1)
            lo = max(0, target - _SEARCH)
            hi = min(n_in - 1, target + _SEARCH)
            ref = xp[prev_s + hop:prev_s + hop + hop]
            seg = xp[lo:hi + hop]
            corr = np.correlate(seg, ref, mode="valid")
            s = lo + int(np.argmax(corr))
        out[t_out:t_out + _GRAIN] += xp[s:s + _GRAIN] * win
        wsum[t_out:t_out + _GRAIN] += win
        prev_s = s
        t_out += hop
    out /= np.maximum(wsum, 1e-8)
    return out[:n_out]


def resample_to_length(x: np.ndarray, n_out: int) -> np.ndarray:
    if n_out == x.size:
        return x.copy()
    pos = np.linspace(0.0, x.size - 1, n_out)
    return np.interp(pos, np.arange(x.size), x)


def pitch_shift(x: np.ndarray, semitones: float) -> np.ndarray:
    """Shift pitch by `semitones` keeping the original length."""
    if semitones == 0.0:
        return x.copy()
    k = 2.0 ** (semitones / 12.0)
    stretched = time_stretch(x, 1.0 / k)  # ~k times longer, same pitch
    return resample_to_length(stretched, x.size)  # read k times faster: pitch * k


def augment(
    w: Waveform,
    rng,
    p_time_stretch: float = 0.5,
    p_pitch_shift: float = 0.5,
    target_duration: float | None = None,
) -> Waveform:
    """Apply each transform independently with its probability.

    Draws, in order: stretch gate, stretch rate, pitch gate, semitone
    offset (rate/offset only when the gate fires). When neither fires the
    input is returned untouched. If `target_duration` is set the result is
    re-standardized to that length.
    """
    x = w.samples
    changed = False
    if rng.random() < p_time_stretch:
        rate = rng.uniform(*STRETCH_RANGE)
        x = time_stretch(x, rate)
        changed = True
    if rng.random() < p_pitch_shift:
        semis = rng.uniform(-PITCH_RANGE_SEMITONES, PITCH_RANGE_SEMITONES)
        x = pitch_shift(x, semis)
        changed = True
    if not changed:
        return w
    out = Waveform(np.clip(x, -1.0, 1.0), w.sample_rate)
    if target_duration is not None:
        out = standardize_duration(out, target_duration, w.sample_rate)
    return out
