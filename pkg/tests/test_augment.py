"""Augmentation transforms measured in the spectral/temporal domain."""

import numpy as np
import pytest

from vabark.audio import Waveform
from vabark.augment import augment, pitch_shift, time_stretch

SR = 44100


class _FixedRng:
    """Duck-typed generator with scripted draws."""

    def __init__(self, randoms, uniforms=()):
        self._r = list(randoms)
        self._u = list(uniforms)

    def random(self):
        return self._r.pop(0)

    def uniform(self, lo, hi):
        return self._u.pop(0)


def _dominant_freq(x, sr=SR):
    spec = np.abs(np.fft.rfft(x * np.hanning(x.size)))
    freqs = np.fft.rfftfreq(x.size, 1 / sr)
    return freqs[np.argmax(spec)]


def test_identity_when_both_gates_miss():
    t = np.arange(SR) / SR
    w = Waveform(0.4 * np.sin(2 * np.pi * 330 * t), SR)
    out = augment(w, _FixedRng([0.9, 0.9]))
    assert out is w


def test_pitch_shift_octave_up_doubles_frequency():
    t = np.arange(2 * SR) / SR
    x = 0.5 * np.sin(2 * np.pi * 220.0 * t)
    y = pitch_shift(x, 12.0)
    assert y.size == x.size
    f = _dominant_freq(y)
    assert abs(f - 440.0) / 440.0 < 0.03


def test_pitch_shift_two_semitones():
    t = np.arange(2 * SR) / SR
    x = 0.5 * np.sin(2 * np.pi * 440.0 * t)
    f = _dominant_freq(pitch_shift(x, 2.0))
    expected = 440.0 * 2 ** (2 / 12)
    assert abs(f - expected) / expected < 0.03


def test_time_stretch_scales_onset_spacing():
    # clicks every 0.5 s; rate 1.1 compresses spacing by 1/1.1
    n = 3 * SR
    x = np.zeros(n)
    onsets = np.arange(0.25, 2.8, 0.5)
    for t0 in onsets:
        i = int(t0 * SR)
        x[i:i + 200] = np.hanning(200)
    y = time_stretch(x, 1.1)
    peaks = []
    thresh = 0.5 * y.max()
    above = y > thresh
    i = 0
    while i < y.size:
        if above[i]:
            j = i
            while j < y.size and above[j]:
                j += 1
            peaks.append((i + j) / 2)
            i = j + int(0.1 * SR)
        else:
            i += 1
    spacings = np.diff(peaks) / SR
    assert np.allclose(spacings, 0.5 / 1.1, rtol=0.05)
    assert abs(y.size - n / 1.1) < 1024


def test_time_stretch_preserves_pitch():
    t = np.arange(2 * SR) / SR
    x = 0.5 * np.sin(2 * np.pi * 500.0 * t)
    y = time_stretch(x, 0.92)
    assert abs(_dominant_freq(y) - 500.0) / 500.0 < 0.02


def test_augment_restandardizes_duration():
    t = np.arange(3 * SR) / SR
    w = Waveform(0.3 * np.sin(2 * np.pi * 250 * t), SR)
    out = augment(w, _FixedRng([0.1, 0.9], uniforms=[1.1]), target_duration=3.0)
    assert out.samples.size == 3 * SR


def test_augment_deterministic_per_seed():
    t = np.arange(3 * SR) / SR
    w = Waveform(0.3 * np.sin(2 * np.pi * 250 * t), SR)
    o1 = augment(w, np.random.default_rng(5), target_duration=3.0)
    o2 = augment(w, np.random.default_rng(5), target_duration=3.0)
    assert np.array_equal(o1.samples, o2.samples)


@pytest.mark.parametrize("rate", [0.9, 1.0, 1.1])
def test_stretch_output_length(rate):
    x = np.random.default_rng(0).uniform(-0.5, 0.5, SR)
    y = time_stretch(x, rate)
    assert abs(y.size - x.size / rate) <= 1
