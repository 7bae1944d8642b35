"""Shared test helpers: an in-test multitask loss and the finite-difference oracle.

The loss here is written independently of the package training code so the
gradient checks exercise model.backward against plain arithmetic.
"""

import numpy as np

from vabark.model import forward


def scalar_loss_from_output(out, targets, weights):
    """Weighted multitask loss computed from a ModelOutput (batch-mean terms)."""
    wv, wa, we, ws, wg = weights
    b = out.valence.shape[0]
    l_v = np.mean((out.valence - targets["valence"]) ** 2)
    l_a = np.mean((out.arousal - targets["arousal"]) ** 2)
    idx = np.arange(b)
    l_e = -np.mean(np.log(out.emotion_probs[idx, targets["emotion"]]))
    l_s = -np.mean(np.log(out.size_probs[idx, targets["size"]]))
    l_g = -np.mean(np.log(out.gender_probs[idx, targets["gender"]]))
    return wv * l_v + wa * l_a + we * l_e + ws * l_s + wg * l_g


def out_grads_from_output(out, targets, weights):
    """Analytic d loss / d outputs matching scalar_loss_from_output."""
    wv, wa, we, ws, wg = weights
    b = out.valence.shape[0]
    idx = np.arange(b)

    def ce_grad(probs, true_idx, w):
        g = probs.copy()
        g[idx, true_idx] -= 1.0
        return w * g / b

    return {
        "d_valence": wv * 2.0 * (out.valence - targets["valence"]) / b,
        "d_arousal": wa * 2.0 * (out.arousal - targets["arousal"]) / b,
        "d_emotion_logits": ce_grad(out.emotion_probs, targets["emotion"], we),
        "d_size_logits": ce_grad(out.size_probs, targets["size"], ws),
        "d_gender_logits": ce_grad(out.gender_probs, targets["gender"], wg),
    }


def random_targets(cfg, b, seed):
    rng = np.random.default_rng(seed)
    return {
        "valence": rng.uniform(-1, 1, b),
        "arousal": rng.uniform(0, 1, b),
        "emotion": rng.integers(0, cfg.emotion_classes, b),
        "size": rng.integers(0, cfg.size_classes, b),
        "gender": rng.integers(0, cfg.gender_classes, b),
    }


def fd_gradient(params, cfg, x, loss_fn, name, index, step=1e-5):
    """Central finite difference of loss_fn w.r.t. one parameter entry."""
    flat = params[name].ravel()
    orig = flat[index]
    flat[index] = orig + step
    lp = loss_fn(forward(params, cfg, x)[0])
    flat[index] = orig - step
    lm = loss_fn(forward(params, cfg, x)[0])
    flat[index] = orig
    return (lp - lm) / (2.0 * step)


def max_relative_error(analytic, numeric, floor=1e-6):
    denom = max(abs(analytic), abs(numeric), floor)
    return abs(analytic - numeric) / denom
