"""Forward-pass contracts: shapes, ranges, determinism, parameter accounting."""

import numpy as np
import pytest

from vabark.errors import ConfigError
from vabark.model import (
    ModelConfig,
    count_params,
    forward,
    init_params,
    param_count,
    param_shapes,
    predict,
    sinusoidal_positions,
)

TINY = ModelConfig(
    n_layers=1, d_model=8, n_heads=2, d_ff=16, input_dim=6,
    valence_hidden=8, arousal_hidden=8, emotion_hidden=8, size_hidden=8, gender_hidden=8,
)


def _rand_spec(cfg, t, seed=0, b=None):
    rng = np.random.default_rng(seed)
    shape = (cfg.input_dim, t) if b is None else (b, cfg.input_dim, t)
    return rng.normal(0, 1, shape)


class TestParameterAccounting:
    def test_paper_config_counts(self):
        cfg = ModelConfig()
        counts = count_params(cfg)
        assert counts["encoder_per_layer"] == 4 * (512 * 512 + 512) + 512 * 2048 + 2048 + 2048 * 512 + 512 + 2 * 2 * 512
        assert counts["encoder"] == 18_914_304
        assert counts["input_projection"] == 66_048
        assert counts["heads"] == {
            "valence": 131_585, "arousal": 131_585, "emotion": 133_384,
            "size": 66_051, "gender": 32_962,
        }
        assert counts["total"] == 19_475_919

    def test_actual_params_match_closed_form(self):
        for cfg in (TINY, ModelConfig(n_layers=2, d_model=64, n_heads=4, d_ff=256)):
            params = init_params(cfg, seed=0)
            assert param_count(params) == count_params(cfg)["total"]
            for name, shape in param_shapes(cfg).items():
                assert params[name].shape == shape

    def test_init_deterministic(self):
        p1 = init_params(TINY, seed=42)
        p2 = init_params(TINY, seed=42)
        assert all(np.array_equal(p1[k], p2[k]) for k in p1)
        p3 = init_params(TINY, seed=43)
        assert any(not np.array_equal(p1[k], p3[k]) for k in p1)


class TestForward:
    def test_output_ranges_and_shapes(self):
        params = init_params(TINY, seed=1)
        out, _ = forward(params, TINY, _rand_spec(TINY, 10, b=5))
        assert out.valence.shape == (5,)
        assert np.all(np.abs(out.valence) <= 1.0)
        assert np.all((out.arousal >= 0) & (out.arousal <= 1))
        for probs, k in ((out.emotion_probs, 8), (out.size_probs, 3), (out.gender_probs, 2)):
            assert probs.shape == (5, k)
            assert np.allclose(probs.sum(axis=1), 1.0, atol=1e-6)
            assert np.all(probs >= 0)

    def test_eval_mode_deterministic(self):
        params = init_params(TINY, seed=2)
        x = _rand_spec(TINY, 12, b=3)
        o1 = predict(params, TINY, x)
        o2 = predict(params, TINY, x)
        assert np.array_equal(o1.valence, o2.valence)
        assert np.array_equal(o1.emotion_probs, o2.emotion_probs)

    def test_single_input_matches_batch(self):
        params = init_params(TINY, seed=3)
        xs = _rand_spec(TINY, 9, b=4)
        batch = predict(params, TINY, xs)
        for i in range(4):
            single = predict(params, TINY, xs[i])
            assert np.allclose(single.valence[0], batch.valence[i], atol=1e-6)
            assert np.allclose(single.emotion_probs[0], batch.emotion_probs[i], atol=1e-6)

    def test_train_mode_requires_rng_and_uses_dropout(self):
        params = init_params(TINY, seed=4)
        x = _rand_spec(TINY, 8, b=2)
        with pytest.raises(ConfigError):
            forward(params, TINY, x, train_mode=True)
        o1, _ = forward(params, TINY, x, train_mode=True, rng=np.random.default_rng(0))
        o2, _ = forward(params, TINY, x, train_mode=True, rng=np.random.default_rng(0))
        o3, _ = forward(params, TINY, x, train_mode=True, rng=np.random.default_rng(9))
        assert np.array_equal(o1.valence, o2.valence)
        assert not np.array_equal(o1.valence, o3.valence)

    def test_shape_mismatch_rejected(self):
        params = init_params(TINY, seed=5)
        with pytest.raises(ConfigError):
            forward(params, TINY, np.zeros((4, TINY.input_dim + 1, 10)))

    def test_permutation_equivariance_of_pooled_features(self):
        cfg = TINY
        params = init_params(cfg, seed=6, dtype=np.float64)
        x = _rand_spec(cfg, 11, b=2)
        t = x.shape[-1]
        pe = sinusoidal_positions(t, cfg.d_model)
        perm = np.random.default_rng(0).permutation(t)
        _, c1 = forward(params, cfg, x)
        _, c2 = forward(params, cfg, x[:, :, perm], pos_override=pe[perm])
        assert np.allclose(c1["h"], c2["h"], atol=1e-10)


def test_config_validation():
    with pytest.raises(ConfigError):
        ModelConfig(d_model=10, n_heads=3)
    with pytest.raises(ConfigError):
        ModelConfig(n_layers=0)
    with pytest.raises(ConfigError):
        ModelConfig.from_dict({"n_layers": 2, "bogus": 1})
    cfg = ModelConfig.from_dict({"n_layers": 2, "d_model": 64, "n_heads": 4})
    assert cfg.n_layers == 2 and cfg.head_dim == 16
