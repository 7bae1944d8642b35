"""Synthetic vocalization corpus.

Each clip is a decaying-partial harmonic stack mixed with band-limited
noise, shaped into 1-4 bursts and scaled to a target RMS. The per-emotion
parameter distributions live in data/emotion_acoustics.json and are chosen
so that energetic emotions land high on arousal and bright/quiet emotions
land high on valence once the labeler runs. Ground truth is therefore a
deterministic function of audible acoustics, which is what makes the
desk-scale training experiments meaningful.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass
from importlib import resources

import numpy as np

from .audio import Waveform, hann_window, load_wav, write_wav
from .augment import augment, pitch_shift
from .errors import ConfigError
from .manifest import write_manifest
from .parallel import derived_rng, ordered_map
from .valabel import EMOTIONS, GENDERS, SIZES

SAMPLE_RATE = 44100

# Default corpus composition (emotion, breed, gender shares and the enhanced fraction).
EMOTION_MIX = {
    "anxious": 0.353, "territorial": 0.221, "alert": 0.125,
    "separation_anxiety": 0.091, "excited": 0.078, "fearful": 0.055,
    "playful": 0.042, "content": 0.033,
}
BREED_MIX = {"husky": 0.425, "shibainu": 0.229, "pitbull": 0.146, "gsd": 0.107, "chihuahua": 0.093}
BREED_SIZE = {"husky": "large", "pitbull": "large", "gsd": "large", "shibainu": "medium", "chihuahua": "small"}
GENDER_MIX = {"female": 0.612, "male": 0.388}
ENHANCED_SHARE = 0.628

# Base fundamental by body size; gender/emotion multipliers shift within the band.
SIZE_F0_BASE = {"large": (100.0, 180.0), "medium": (320.0, 620.0), "small": (850.0, 1400.0)}
SIZE_F0_BAND = {"large": (80.0, 250.0), "medium": (240.0, 800.0), "small": (640.0, 2000.0)}
GENDER_F0_MULT = {"male": 0.85, "female": 1.05}


def default_emotion_acoustics() -> dict:
    with resources.files("vabark").joinpath("data/emotion_acoustics.json").open("r") as fh:
        return json.load(fh)


def load_emotion_acoustics(path) -> dict:
    with open(path, "r", encoding="utf-8") as fh:
        table = json.load(fh)
    if set(table) != set(EMOTIONS):
        raise ConfigError("acoustics table must cover exactly the eight emotions")
    return table


@dataclass(frozen=True)
class SampleSpec:
    emotion: str
    size: str
    gender: str
    f0: float
    energy: float
    noisiness: float
    duration: float
    brightness: float = 0.5
    n_bursts: int = 2

    def __post_init__(self):
        if self.emotion not in EMOTIONS or self.size not in SIZES or self.gender not in GENDERS:
            raise ConfigError("invalid emotion/size/gender")
        if not 80.0 <= self.f0 <= 2000.0:
            raise ConfigError(f"f0 {self.f0} outside [80, 2000]")
        lo, hi = SIZE_F0_BAND[self.size]
        if not lo <= self.f0 <= hi:
            raise ConfigError(f"f0 {self.f0:.0f} violates the {self.size}-size band [{lo}, {hi}]")
        if not 0.0 < self.energy <= 1.0:
            raise ConfigError("energy must be in (0, 1]")
        if not 0.0 <= self.noisiness <= 1.0:
            raise ConfigError("noisiness must be in [0, 1]")
        if not 0.0 <= self.brightness <= 1.0:
            raise ConfigError("brightness must be in [0, 1]")
        if self.duration <= 0 or not 1 <= self.n_bursts <= 8:
            raise ConfigError("bad duration or burst count")


def _burst_envelope(n: int, n_bursts: int, rng, sr: int) -> np.ndarray:
    env = np.zeros(n)
    slot = n / n_bursts
    for b in range(n_bursts):
        length = int(rng.uniform(0.12, 0.45) * sr)
        length = min(length, max(int(0.9 * slot), 256))
        start = int(b * slot + rng.uniform(0.0, max(slot - length, 1.0)))
        attack = max(int(0.2 * length), 8)
        decay = max(int(0.3 * length), 8)
        shape = np.ones(length)
        shape[:attack] = 0.5 - 0.5 * np.cos(np.pi * np.arange(attack) / attack)
        shape[-decay:] *= 0.5 + 0.5 * np.cos(np.pi * np.arange(decay) / decay)
        end = min(start + length, n)
        env[start:end] = np.maximum(env[start:end], shape[:end - start])
    return env


def synth_sample(spec: SampleSpec, seed: int, sample_rate: int = SAMPLE_RATE) -> Waveform:
    """Render one clip deterministically from (spec, seed)."""
    rng = np.random.default_rng(seed)
    n = int(round(spec.duration * sample_rate))
    t = np.arange(n) / sample_rate

    env = _burst_envelope(n, spec.n_bursts, rng, sample_rate)
    active = env > 1e-3

    # harmonic stack: partial k decays as k^-alpha; Schroeder phases keep the
    # crest factor low so even energy 0.4 stays clear of clipping
    alpha = 3.2 - 2.4 * spec.brightness
    n_partials = max(1, min(20, int(0.45 * sample_rate / spec.f0)))
    k = np.arange(1, n_partials + 1)
    phases = -np.pi * k * (k - 1) / n_partials
    harm = (k[:, None] ** -alpha * np.sin(2 * np.pi * spec.f0 * k[:, None] * t + phases[:, None])).sum(axis=0)

    band_lo = max(150.0, 0.4 * spec.f0)
    band_hi = 1500.0 + spec.brightness * (0.42 * sample_rate - 1500.0)
    white = rng.standard_normal(n)
    spectrum = np.fft.rfft(white)
    freqs = np.fft.rfftfreq(n, 1.0 / sample_rate)
    spectrum[(freqs < band_lo) | (freqs > band_hi)] = 0.0
    noise = np.fft.irfft(spectrum, n)

    def unit_rms(sig):
        r = np.sqrt(np.mean(sig[active] ** 2)) if active.any() else 0.0
        return sig / r if r > 0 else sig

    x = (1.0 - spec.noisiness) * unit_rms(harm * env) + spec.noisiness * unit_rms(noise * env)
    # soft-limit the crest so energies up to ~0.4 scale linearly without
    # hitting the hard peak guard (which would bend the energy contract)
    knee = 2.3
    x = knee * np.tanh(x / knee)
    x = unit_rms(x) * spec.energy
    peak = np.max(np.abs(x))
    if peak > 0.99:
        x = x * (0.99 / peak)
    return Waveform(x, sample_rate)


def _allocate(n: int, weights: dict, order) -> dict:
    """Largest-remainder allocation of n items across `order` keys."""
    total = sum(weights[k] for k in order)
    quotas = [n * weights[k] / total for k in order]
    counts = [int(q) for q in quotas]
    short = n - sum(counts)
    remainders = sorted(range(len(order)), key=lambda i: (-(quotas[i] - counts[i]), i))
    for i in remainders[:short]:
        counts[i] += 1
    return dict(zip(order, counts))


def _draw_log_uniform(rng, lo, hi):
    return float(np.exp(rng.uniform(np.log(lo), np.log(hi))))


def synth_corpus(
    n: int,
    seed: int,
    out_dir,
    class_mix: dict | None = None,
    acoustics: dict | None = None,
    enhanced_share: float = ENHANCED_SHARE,
    jobs: int = 1,
) -> list[dict]:
    """Generate n WAVs plus a manifest under out_dir. Returns the manifest rows."""
    if n < 100:
        raise ConfigError("corpus size must be at least 100")
    mix = dict(EMOTION_MIX if class_mix is None else class_mix)
    if set(mix) - set(EMOTIONS):
        raise ConfigError(f"unknown emotions in mix: {sorted(set(mix) - set(EMOTIONS))}")
    table = default_emotion_acoustics() if acoustics is None else acoustics

    wav_dir = os.path.join(out_dir, "wav")
    os.makedirs(wav_dir, exist_ok=True)

    emotion_counts = _allocate(n, mix, [e for e in EMOTIONS if mix.get(e, 0) > 0])
    breed_counts = _allocate(n, BREED_MIX, sorted(BREED_MIX))
    gender_counts = _allocate(n, GENDER_MIX, sorted(GENDER_MIX))

    breeds = [b for b, c in sorted(breed_counts.items()) for _ in range(c)]
    genders = [g for g, c in sorted(gender_counts.items()) for _ in range(c)]
    derived_rng(seed, "assign-breed").shuffle(breeds)
    derived_rng(seed, "assign-gender").shuffle(genders)

    rows = []
    gi = 0
    for emotion in EMOTIONS:
        n_e = emotion_counts.get(emotion, 0)
        if n_e == 0:
            continue
        n_enh = min(int(round(enhanced_share * n_e)), n_e - 1) if n_e > 1 else 0
        n_orig = n_e - n_enh
        for j in range(n_e):
            breed, gender = breeds[gi], genders[gi]
            size = BREED_SIZE[breed]
            row = {
                "id": f"{gi:05d}_{emotion}",
                "path": f"wav/{gi:05d}_{emotion}.wav",
                "emotion": emotion, "breed": breed, "size": size, "gender": gender,
                "source": "original" if j < n_orig else "enhanced",
            }
            rows.append(row)
            gi += 1

    by_emotion_originals = {}
    for idx, row in enumerate(rows):
        if row["source"] == "original":
            by_emotion_originals.setdefault(row["emotion"], []).append(idx)

    def render_original(idx):
        row = rows[idx]
        rng = derived_rng(seed, "spec", idx)
        e = table[row["emotion"]]
        base_lo, base_hi = SIZE_F0_BASE[row["size"]]
        f0 = _draw_log_uniform(rng, base_lo, base_hi)
        f0 *= GENDER_F0_MULT[row["gender"]] * rng.uniform(*e["f0_mult"])
        lo, hi = SIZE_F0_BAND[row["size"]]
        f0 = float(np.clip(f0, max(lo, 80.0), min(hi, 2000.0)))
        spec = SampleSpec(
            emotion=row["emotion"], size=row["size"], gender=row["gender"],
            f0=f0,
            energy=_draw_log_uniform(rng, *e["energy"]),
            noisiness=float(rng.uniform(*e["noisiness"])),
            duration=float(rng.uniform(1.2, 4.2)),
            brightness=float(rng.uniform(*e["brightness"])),
            n_bursts=int(rng.integers(e["bursts"][0], e["bursts"][1] + 1)),
        )
        render_seed = int(np.random.SeedSequence((seed, 0xA0D10, idx)).generate_state(1)[0])
        w = synth_sample(spec, render_seed)
        write_wav(os.path.join(out_dir, rows[idx]["path"]), w.samples, w.sample_rate)
        return idx

    def render_enhanced(idx):
        row = rows[idx]
        rng = derived_rng(seed, "enh", idx)
        sources = by_emotion_originals[row["emotion"]]
        src = rows[sources[int(rng.integers(0, len(sources)))]]
        w = load_wav(os.path.join(out_dir, src["path"]))
        out = augment(w, rng)
        if out is w:  # both gates missed: force a pitch shift so the row is enhanced
            out = Waveform(np.clip(pitch_shift(w.samples, float(rng.uniform(-2.0, 2.0))), -1, 1), w.sample_rate)
        write_wav(os.path.join(out_dir, row["path"]), out.samples, out.sample_rate)
        return idx

    originals = [i for i, r in enumerate(rows) if r["source"] == "original"]
    enhanced = [i for i, r in enumerate(rows) if r["source"] == "enhanced"]
    ordered_map(render_original, originals, jobs=jobs)
    ordered_map(render_enhanced, enhanced, jobs=jobs)

    write_manifest(os.path.join(out_dir, "manifest.jsonl"), rows)
    return rows
