"""Audio ingestion and the mel-spectrogram front end.

Supported container: RIFF WAV, PCM16 little-endian or IEEE float32, 1-2
channels. Stereo is downmixed to mono by averaging. Everything downstream
works on mono float waveforms in [-1, 1].
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import scipy.fft as _fft

from .errors import ConfigError, DecodeError, UnsupportedFormatError

# Floor added to power before log compression; also reused as the silence
# floor in feature extraction so log() stays finite everywhere.
LOG_EPS = 1e-10

_WAVE_FORMAT_PCM = 1
_WAVE_FORMAT_IEEE_FLOAT = 3

# scipy's pocketfft build is substantially faster than numpy's here and can
# fan the batched transforms out over cores; results are identical either way.
_FFT_WORKERS = 2


@dataclass(frozen=True)
class Waveform:
    """Decoded mono audio. `samples` is 1-D float in [-1, 1]."""

    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        s = np.asarray(self.samples, dtype=np.float64)
        if s.ndim != 1 or s.size == 0:
            raise ConfigError("waveform must be a non-empty 1-D array")
        if not np.all(np.isfinite(s)):
            raise ConfigError("waveform contains non-finite samples")
        if not (isinstance(self.sample_rate, (int, np.integer)) and self.sample_rate > 0):
            raise ConfigError("sample_rate must be a positive integer")
        object.__setattr__(self, "samples", s)
        object.__setattr__(self, "sample_rate", int(self.sample_rate))

    @property
    def duration(self) -> float:
        return self.samples.size / self.sample_rate


@dataclass(frozen=True)
class SpectrogramConfig:
    """Mel front-end settings. Defaults give a 128 x 259 output for 3 s at 44.1 kHz."""

    n_mels: int = 128
    hop: int = 512
    n_fft: int = 2048
    target_duration: float = 3.0
    sample_rate: int = 44100

    def __post_init__(self):
        if self.hop <= 0 or self.n_fft < self.hop:
            raise ConfigError("need n_fft >= hop > 0")
        if self.n_mels <= 0 or self.sample_rate <= 0 or self.target_duration <= 0:
            raise ConfigError("n_mels, sample_rate and target_duration must be positive")

    @property
    def n_samples(self) -> int:
        return int(round(self.target_duration * self.sample_rate))

    @property
    def n_frames(self) -> int:
        # centered framing: one frame per hop plus the frame at t=0
        return 1 + self.n_samples // self.hop


@dataclass(frozen=True)
class MelSpectrogram:
    """Log-power mel spectrogram, shape [n_mels, n_frames]."""

    values: np.ndarray
    config: SpectrogramConfig


def load_wav(path) -> Waveform:
    """Decode a RIFF WAV file (PCM16 LE or IEEE float32, 1-2 channels)."""
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < 12 or raw[0:4] != b"RIFF" or raw[8:12] != b"WAVE":
        raise DecodeError(f"{path}: not a RIFF/WAVE file")

    fmt = None
    data = None
    off = 12
    while off + 8 <= len(raw):
        cid = raw[off:off + 4]
        (csize,) = struct.unpack_from("<I", raw, off + 4)
        body = raw[off + 8:off + 8 + csize]
        if cid == b"fmt ":
            if len(body) < 16:
                raise DecodeError(f"{path}: truncated fmt chunk")
            fmt = struct.unpack_from("<HHIIHH", body, 0)
        elif cid == b"data":
            if len(body) < csize:
                raise DecodeError(f"{path}: truncated data chunk")
            data = body
        off += 8 + csize + (csize & 1)  # chunks are word-aligned

    if fmt is None or data is None:
        raise DecodeError(f"{path}: missing fmt or data chunk")

    audio_format, channels, rate, _byte_rate, _block_align, bits = fmt
    if channels not in (1, 2):
        raise UnsupportedFormatError(f"{path}: {channels} channels (only mono/stereo)")
    if audio_format == _WAVE_FORMAT_PCM and bits == 16:
        x = np.frombuffer(data, dtype="<i2").astype(np.float64) / 32768.0
    elif audio_format == _WAVE_FORMAT_IEEE_FLOAT and bits == 32:
        x = np.frombuffer(data, dtype="<f4").astype(np.float64)
    else:
        raise UnsupportedFormatError(
            f"{path}: format tag {audio_format} with {bits}-bit samples is not supported"
        )

    if channels == 2:
        if x.size % 2:
            raise DecodeError(f"{path}: odd sample count for stereo data")
        x = x.reshape(-1, 2).mean(axis=1)
    if x.size == 0:
        raise DecodeError(f"{path}: empty data chunk")
    return Waveform(np.clip(x, -1.0, 1.0), int(rate))


def write_wav(path, samples: np.ndarray, sample_rate: int, encoding: str = "float32") -> None:
    """Write a mono WAV file. `encoding` is 'float32' (default) or 'pcm16'."""
    x = np.asarray(samples, dtype=np.float64)
    if encoding == "float32":
        payload = np.clip(x, -1.0, 1.0).astype("<f4").tobytes()
        fmt_tag, bits = _WAVE_FORMAT_IEEE_FLOAT, 32
    elif encoding == "pcm16":
        q = np.clip(np.round(x * 32768.0), -32768, 32767).astype("<i2")
        payload = q.tobytes()
        fmt_tag, bits = _WAVE_FORMAT_PCM, 16
    else:
        raise ConfigError(f"unknown WAV encoding {encoding!r}")

    block_align = bits // 8
    header = struct.pack(
        "<4sI4s4sIHHIIHH4sI",
        b"RIFF", 36 + len(payload), b"WAVE",
        b"fmt ", 16, fmt_tag, 1, sample_rate,
        sample_rate * block_align, block_align, bits,
        b"data", len(payload),
    )
    with open(path, "wb") as fh:
        fh.write(header + payload)


def resample_linear(w: Waveform, new_rate: int) -> Waveform:
    """Linear-interpolation resampling. Desk-scale fidelity trade-off by design."""
    if new_rate == w.sample_rate:
        return w
    n_out = int(round(w.samples.size * new_rate / w.sample_rate))
    n_out = max(n_out, 1)
    t_out = np.arange(n_out) * (w.sample_rate / new_rate)
    y = np.interp(t_out, np.arange(w.samples.size), w.samples)
    return Waveform(y, new_rate)


def standardize_duration(w: Waveform, target_duration: float, sample_rate: int) -> Waveform:
    """Resample if needed, then zero-pad at the end or center-crop to the target length."""
    if target_duration <= 0:
        raise ConfigError("target_duration must be positive")
    if w.sample_rate != sample_rate:
        w = resample_linear(w, sample_rate)
    n_target = int(round(target_duration * sample_rate))
    n = w.samples.size
    if n == n_target:
        return w
    if n < n_target:
        out = np.zeros(n_target, dtype=np.float64)
        out[:n] = w.samples
    else:
        start = (n - n_target) // 2
        out = w.samples[start:start + n_target].copy()
    return Waveform(out, sample_rate)


def hann_window(n: int) -> np.ndarray:
    """Periodic Hann window (sums to a constant at 50% overlap)."""
    return 0.5 - 0.5 * np.cos(2.0 * np.pi * np.arange(n) / n)


def frame_centered(x: np.ndarray, frame_len: int, hop: int) -> np.ndarray:
    """Centered frames with reflect padding; works on (..., N) arrays.

    Returns (..., 1 + N // hop, frame_len).
    """
    pad = frame_len // 2
    xp = np.pad(x, [(0, 0)] * (x.ndim - 1) + [(pad, pad)], mode="reflect")
    n_frames = 1 + x.shape[-1] // hop
    windows = np.lib.stride_tricks.sliding_window_view(xp, frame_len, axis=-1)
    return windows[..., ::hop, :][..., :n_frames, :]


def power_stft(x: np.ndarray, n_fft: int, hop: int) -> np.ndarray:
    """Hann-windowed centered power spectrogram, shape (..., n_fft//2 + 1, n_frames)."""
    frames = frame_centered(x, n_fft, hop) * hann_window(n_fft).astype(x.dtype, copy=False)
    spec = _fft.rfft(frames, axis=-1, workers=_FFT_WORKERS)
    power = spec.real**2 + spec.imag**2
    return np.swapaxes(power, -1, -2)


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


@lru_cache(maxsize=8)
def _mel_filterbank_cached(n_mels: int, n_fft: int, sample_rate: int) -> np.ndarray:
    fb = _build_mel_filterbank(n_mels, n_fft, sample_rate)
    fb.setflags(write=False)
    return fb


def mel_filterbank(n_mels: int, n_fft: int, sample_rate: int) -> np.ndarray:
    """HTK-style triangular filters, unit peak, spanning 0..Nyquist.

    Returns [n_mels, n_fft//2 + 1].
    """
    return _mel_filterbank_cached(n_mels, n_fft, sample_rate)


def _build_mel_filterbank(n_mels: int, n_fft: int, sample_rate: int) -> np.ndarray:
    nyquist = sample_rate / 2.0
    mel_pts = np.linspace(hz_to_mel(0.0), hz_to_mel(nyquist), n_mels + 2)
    hz_pts = mel_to_hz(mel_pts)
    bin_freqs = np.fft.rfftfreq(n_fft, d=1.0 / sample_rate)

    fb = np.zeros((n_mels, bin_freqs.size))
    for m in range(n_mels):
        lo, center, hi = hz_pts[m], hz_pts[m + 1], hz_pts[m + 2]
        up = (bin_freqs - lo) / (center - lo)
        down = (hi - bin_freqs) / (hi - center)
        fb[m] = np.maximum(0.0, np.minimum(up, down))
    return fb


def mel_filter_centers(n_mels: int, sample_rate: int) -> np.ndarray:
    """Center frequency (Hz) of each triangular filter."""
    nyquist = sample_rate / 2.0
    mel_pts = np.linspace(hz_to_mel(0.0), hz_to_mel(nyquist), n_mels + 2)
    return mel_to_hz(mel_pts)[1:-1]


def mel_spectrogram(w: Waveform, cfg: SpectrogramConfig) -> MelSpectrogram:
    """Log-power mel spectrogram of a standardized waveform."""
    if w.sample_rate != cfg.sample_rate:
        raise ConfigError(
            f"waveform rate {w.sample_rate} != config rate {cfg.sample_rate}; standardize first"
        )
    if w.samples.size != cfg.n_samples:
        raise ConfigError(
            f"waveform length {w.samples.size} != expected {cfg.n_samples}; standardize first"
        )
    values = mel_spectrogram_batch(w.samples[None, :], cfg)[0]
    return MelSpectrogram(values, cfg)


def mel_spectrogram_batch(
    samples: np.ndarray, cfg: SpectrogramConfig, dtype=np.float32
) -> np.ndarray:
    """Mel spectrograms for a [B, N] batch of standardized signals -> [B, n_mels, n_frames].

    Runs in `dtype` end to end; float32 is plenty for the training path and
    roughly halves the FFT and filterbank cost.
    """
    x = np.asarray(samples).astype(dtype, copy=False)
    frames = frame_centered(x, cfg.n_fft, cfg.hop) * hann_window(cfg.n_fft).astype(dtype)
    spec = _fft.rfft(frames, axis=-1, workers=_FFT_WORKERS)
    power = (spec.real**2 + spec.imag**2).astype(dtype, copy=False)  # [B, T, n_bins]
    fb = mel_filterbank(cfg.n_mels, cfg.n_fft, cfg.sample_rate).astype(dtype)
    mel_power = power @ fb.T  # [B, T, n_mels]
    out = np.log(mel_power + dtype(LOG_EPS))
    return np.ascontiguousarray(out.swapaxes(-1, -2))
