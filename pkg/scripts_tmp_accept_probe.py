"""Probe run for the desk-scale acceptance experiments (dev only)."""

import json
import os
import sys
import time

sys.path.insert(0, "src")

from vabark.anchors import fit_anchors
from vabark.audio import SpectrogramConfig, load_wav, standardize_duration
from vabark.experiments import run_ablation
from vabark.features import extract_features
from vabark.model import ModelConfig
from vabark.parallel import ordered_map
from vabark.synth import synth_corpus
from vabark.training import TrainConfig
from vabark.valabel import label_from_features

OUT = "/tmp/accept_probe"
os.makedirs(OUT, exist_ok=True)

t0 = time.time()
rows = synth_corpus(2000, seed=42, out_dir=os.path.join(OUT, "corpus"), jobs=2)
print(f"synth: {time.time()-t0:.0f}s", flush=True)

cfg = SpectrogramConfig()
t0 = time.time()


def feat(row):
    w = standardize_duration(load_wav(os.path.join(OUT, "corpus", row["path"])), 3.0, 44100)
    return extract_features(w, cfg)


feats = ordered_map(feat, rows, jobs=2)
anchors = fit_anchors(feats)
for r, f in zip(rows, feats):
    lab = label_from_features(f, r["emotion"], anchors)
    r["valence"] = lab.valence
    r["arousal"] = lab.arousal
print(f"label: {time.time()-t0:.0f}s", flush=True)

mcfg = ModelConfig(n_layers=2, d_model=64, n_heads=4, d_ff=256, input_dim=128,
                   valence_hidden=32, arousal_hidden=32, emotion_hidden=32,
                   size_hidden=16, gender_hidden=8)
tcfg = TrainConfig(epochs=15, batch_size=32, seed=42, t_max=15)

t0 = time.time()
report = run_ablation("full_mtl", rows, os.path.join(OUT, "corpus"), mcfg, tcfg,
                      os.path.join(OUT, "exp"), jobs=2,
                      log=lambda m: print(m, flush=True))
print(f"experiments: {time.time()-t0:.0f}s", flush=True)
print(json.dumps(report["table"], indent=2))
