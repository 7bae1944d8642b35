"""Checkpoint container round-trips."""

import numpy as np
import pytest

from vabark.audio import SpectrogramConfig
from vabark.checkpoint import load_checkpoint, save_checkpoint
from vabark.errors import ConfigError
from vabark.model import ModelConfig, init_params, predict

CFG = ModelConfig(
    n_layers=1, d_model=8, n_heads=2, d_ff=16, input_dim=6,
    valence_hidden=8, arousal_hidden=8, emotion_hidden=8, size_hidden=8, gender_hidden=8,
)


def test_bit_exact_roundtrip(tmp_path):
    params = init_params(CFG, seed=0)
    stats = {"mean": -10.5, "std": 3.25, "per_bin": False}
    p1 = tmp_path / "a.ckpt"
    p2 = tmp_path / "b.ckpt"
    save_checkpoint(p1, params, CFG, norm_stats=stats, spec_cfg=SpectrogramConfig())
    loaded, cfg2, stats2, spec2, extra = load_checkpoint(p1)
    assert cfg2 == CFG
    assert stats2 == stats
    assert spec2 == SpectrogramConfig()
    assert set(loaded) == set(params)
    for k in params:
        assert np.array_equal(loaded[k], params[k])
        assert loaded[k].dtype == params[k].dtype
    save_checkpoint(p2, loaded, cfg2, norm_stats=stats2, spec_cfg=spec2, extra=extra)
    assert p1.read_bytes() == p2.read_bytes()


def test_predictions_identical_after_roundtrip(tmp_path):
    params = init_params(CFG, seed=3)
    x = np.random.default_rng(0).normal(0, 1, (2, CFG.input_dim, 5)).astype(np.float32)
    before = predict(params, CFG, x)
    path = tmp_path / "m.ckpt"
    save_checkpoint(path, params, CFG)
    loaded, cfg, _, _, _ = load_checkpoint(path)
    after = predict(loaded, cfg, x)
    assert np.array_equal(before.valence, after.valence)
    assert np.array_equal(before.emotion_probs, after.emotion_probs)


def test_rejects_non_checkpoint_and_wrong_version(tmp_path):
    bad = tmp_path / "junk.ckpt"
    bad.write_bytes(b"NOTACKPTxxxxxxxxxxx")
    with pytest.raises(ConfigError):
        load_checkpoint(bad)

    good = tmp_path / "ok.ckpt"
    save_checkpoint(good, init_params(CFG, 0), CFG)
    blob = bytearray(good.read_bytes())
    blob[8] = 99  # corrupt the version field
    bad2 = tmp_path / "v99.ckpt"
    bad2.write_bytes(bytes(blob))
    with pytest.raises(ConfigError):
        load_checkpoint(bad2)


def test_float64_tensors_roundtrip(tmp_path):
    params = init_params(CFG, seed=1, dtype=np.float64)
    path = tmp_path / "f64.ckpt"
    save_checkpoint(path, params, CFG)
    loaded, _, _, _, _ = load_checkpoint(path)
    assert loaded["input.W"].dtype == np.float64
    assert np.array_equal(loaded["input.W"], params["input.W"])
