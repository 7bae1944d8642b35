"""Multi-task audio transformer: shared encoder, five prediction heads.

Implemented directly on numpy with an explicit activation cache so the
backward pass can be checked against central finite differences. Weights
are stored [out, in]; activations flow as x @ W.T + b.

Encoder layout per layer (post-norm):
    x  -> x + dropout(MHA(x))  -> layernorm -> + dropout(FFN(.)) -> layernorm
Final hidden states are mean-pooled over time into h, which feeds every head.
"""

from __future__ import annotations

import time
from dataclasses import asdict, dataclass
from typing import Mapping

import numpy as np

from .errors import ConfigError

LN_EPS = 1e-5

HEAD_ORDER = ("valence", "arousal", "emotion", "size", "gender")


@dataclass(frozen=True)
class ModelConfig:
    n_layers: int = 6
    d_model: int = 512
    n_heads: int = 8
    d_ff: int = 2048
    dropout_p: float = 0.1
    input_dim: int = 128
    valence_hidden: int = 256
    arousal_hidden: int = 256
    emotion_hidden: int = 256
    size_hidden: int = 128
    gender_hidden: int = 64
    emotion_classes: int = 8
    size_classes: int = 3
    gender_classes: int = 2

    def __post_init__(self):
        dims = (
            self.n_layers, self.d_model, self.n_heads, self.d_ff, self.input_dim,
            self.valence_hidden, self.arousal_hidden, self.emotion_hidden,
            self.size_hidden, self.gender_hidden,
            self.emotion_classes, self.size_classes, self.gender_classes,
        )
        if any(d <= 0 for d in dims):
            raise ConfigError("all model dimensions must be positive")
        if self.d_model % self.n_heads != 0:
            raise ConfigError("d_model must be divisible by n_heads")
        if not 0.0 <= self.dropout_p < 1.0:
            raise ConfigError("dropout_p must be in [0, 1)")

    @property
    def head_dim(self) -> int:
        return self.d_model // self.n_heads

    def head_sizes(self) -> dict:
        return {
            "valence": (self.valence_hidden, 1),
            "arousal": (self.arousal_hidden, 1),
            "emotion": (self.emotion_hidden, self.emotion_classes),
            "size": (self.size_hidden, self.size_classes),
            "gender": (self.gender_hidden, self.gender_classes),
        }

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: Mapping) -> "ModelConfig":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown model config keys: {sorted(unknown)}")
        return cls(**d)


def param_shapes(cfg: ModelConfig) -> dict:
    """Canonical parameter name -> shape map; iteration order is the init order."""
    d, f = cfg.d_model, cfg.d_ff
    shapes = {"input.W": (d, cfg.input_dim), "input.b": (d,)}
    for i in range(cfg.n_layers):
        p = f"enc{i}"
        for name in ("Wq", "Wk", "Wv", "Wo"):
            shapes[f"{p}.{name}"] = (d, d)
        for name in ("bq", "bk", "bv", "bo"):
            shapes[f"{p}.{name}"] = (d,)
        shapes[f"{p}.ln1.g"] = (d,)
        shapes[f"{p}.ln1.b"] = (d,)
        shapes[f"{p}.W1"] = (f, d)
        shapes[f"{p}.b1"] = (f,)
        shapes[f"{p}.W2"] = (d, f)
        shapes[f"{p}.b2"] = (d,)
        shapes[f"{p}.ln2.g"] = (d,)
        shapes[f"{p}.ln2.b"] = (d,)
    for head, (hidden, out) in cfg.head_sizes().items():
        shapes[f"head.{head}.W1"] = (hidden, d)
        shapes[f"head.{head}.b1"] = (hidden,)
        shapes[f"head.{head}.W2"] = (out, hidden)
        shapes[f"head.{head}.b2"] = (out,)
    return shapes


def count_params(cfg: ModelConfig) -> dict:
    """Closed-form parameter accounting per section of the network."""
    d, f = cfg.d_model, cfg.d_ff
    per_layer = 4 * (d * d + d) + (d * f + f) + (f * d + d) + 2 * 2 * d
    encoder = cfg.n_layers * per_layer
    input_proj = cfg.input_dim * d + d
    heads = {}
    for head, (hidden, out) in cfg.head_sizes().items():
        heads[head] = d * hidden + hidden + hidden * out + out
    total = encoder + input_proj + sum(heads.values())
    return {
        "encoder": encoder,
        "encoder_per_layer": per_layer,
        "input_projection": input_proj,
        "heads": heads,
        "heads_total": sum(heads.values()),
        "total": total,
    }


def init_params(cfg: ModelConfig, seed: int, dtype=np.float32) -> dict:
    """Uniform Xavier weights, zero biases, identity layer norms. Deterministic per seed."""
    rng = np.random.default_rng(seed)
    params = {}
    for name, shape in param_shapes(cfg).items():
        short = name.rsplit(".", 1)[-1]
        if short.startswith("W"):
            fan_out, fan_in = shape
            a = np.sqrt(6.0 / (fan_in + fan_out))
            params[name] = rng.uniform(-a, a, size=shape).astype(dtype)
        elif short == "g":
            params[name] = np.ones(shape, dtype=dtype)
        else:
            params[name] = np.zeros(shape, dtype=dtype)
    return params


def param_count(params: Mapping[str, np.ndarray]) -> int:
    return int(sum(v.size for v in params.values()))


def sinusoidal_positions(n_pos: int, d_model: int, dtype=np.float64) -> np.ndarray:
    """Fixed sin/cos positional table, shape [n_pos, d_model]."""
    pos = np.arange(n_pos, dtype=np.float64)[:, None]
    i = np.arange(d_model, dtype=np.float64)[None, :]
    angle = pos / np.power(10000.0, 2.0 * (i // 2) / d_model)
    table = np.where(i % 2 == 0, np.sin(angle), np.cos(angle))
    return table.astype(dtype)


@dataclass
class ModelOutput:
    valence: np.ndarray        # [B], tanh range
    arousal: np.ndarray        # [B], sigmoid range
    emotion_probs: np.ndarray  # [B, 8]
    size_probs: np.ndarray     # [B, 3]
    gender_probs: np.ndarray   # [B, 2]


def _softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def _layernorm_fwd(x, g, b):
    mu = x.mean(axis=-1, keepdims=True)
    var = x.var(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + LN_EPS)
    xhat = (x - mu) * inv
    return xhat * g + b, (xhat, inv)


def _layernorm_bwd(dy, cache, g):
    xhat, inv = cache
    dxhat = dy * g
    m1 = dxhat.mean(axis=-1, keepdims=True)
    m2 = (dxhat * xhat).mean(axis=-1, keepdims=True)
    dx = inv * (dxhat - m1 - xhat * m2)
    axes = tuple(range(dy.ndim - 1))
    dg = (dy * xhat).sum(axis=axes)
    db = dy.sum(axis=axes)
    return dx, dg, db


def _split_heads(x, n_heads):
    # contiguous copy so [b, h] slices are valid single-GEMM operands
    b, t, d = x.shape
    return np.ascontiguousarray(x.reshape(b, t, n_heads, d // n_heads).transpose(0, 2, 1, 3))


def _merge_heads(x):
    b, h, t, dh = x.shape
    return np.ascontiguousarray(x.transpose(0, 2, 1, 3)).reshape(b, t, h * dh)


def _attended_context(Q, K, V, scale, store: bool):
    """softmax(scale * Q K^T) @ V, computed per (batch, head) slice.

    The T x T score matrix of one slice stays cache-resident through the
    whole softmax, which matters far more than BLAS peak here: the full
    [B, H, T, T] tensor is tens of MB and main-memory bandwidth is the
    bottleneck. Returns (weights, context); weights is None unless `store`
    (backward needs them, inference does not).
    """
    B, H, T, _ = Q.shape
    weights = np.empty((B, H, T, T), dtype=Q.dtype) if store else None
    scratch = None if store else np.empty((T, T), dtype=Q.dtype)
    ctx = np.empty_like(Q)
    for b in range(B):
        for h in range(H):
            s = weights[b, h] if store else scratch
            np.matmul(Q[b, h], K[b, h].T, out=s)
            s *= scale
            s -= s.max(axis=1, keepdims=True)
            np.exp(s, out=s)
            s /= s.sum(axis=1, keepdims=True)
            np.matmul(s, V[b, h], out=ctx[b, h])
    return weights, ctx


def _attention_input_grads(A, Q, K, V, dctx, scale):
    """Gradients through softmax attention, slice by slice to bound traffic."""
    B, H, T, dh = Q.shape
    dQ = np.empty_like(Q)
    dK = np.empty_like(K)
    scratch = np.empty((T, T), dtype=Q.dtype)
    for b in range(B):
        for h in range(H):
            a = A[b, h]
            np.matmul(dctx[b, h], V[b, h].T, out=scratch)  # dA
            rowdot = np.sum(scratch * a, axis=1, keepdims=True)
            scratch -= rowdot
            scratch *= a
            scratch *= scale  # now holds dS
            np.matmul(scratch, K[b, h], out=dQ[b, h])
            np.matmul(scratch.T, Q[b, h], out=dK[b, h])
    dV = A.transpose(0, 1, 3, 2) @ dctx  # big-K contraction: already fast batched
    return dQ, dK, dV


def _dropout_mask(rng, shape, p, dtype):
    keep = rng.random(shape) >= p
    return keep.astype(dtype) / (1.0 - p)


def forward(
    params: Mapping[str, np.ndarray],
    cfg: ModelConfig,
    specs: np.ndarray,
    train_mode: bool = False,
    rng: np.random.Generator | None = None,
    need_cache: bool = True,
    pos_override: np.ndarray | None = None,
):
    """Run the network on a [B, input_dim, T] batch (or a single [input_dim, T]).

    Returns (ModelOutput, cache). Dropout fires only in train mode and pulls
    from the supplied generator; eval mode is deterministic. `pos_override`
    substitutes the positional table (used by the equivariance tests).
    """
    x = np.asarray(specs)
    single = x.ndim == 2
    if single:
        x = x[None]
    if x.ndim != 3 or x.shape[1] != cfg.input_dim:
        raise ConfigError(f"expected input [B, {cfg.input_dim}, T], got {x.shape}")
    if train_mode and cfg.dropout_p > 0.0 and rng is None:
        raise ConfigError("train-mode forward needs an rng for dropout")

    dtype = params["input.W"].dtype
    x = x.astype(dtype, copy=False)
    B, _, T = x.shape
    drop = train_mode and cfg.dropout_p > 0.0

    frames = x.transpose(0, 2, 1)  # [B, T, input_dim]
    X = frames @ params["input.W"].T + params["input.b"]
    pe = sinusoidal_positions(T, cfg.d_model, dtype) if pos_override is None else pos_override.astype(dtype)
    X = X + pe

    cache = {"frames": frames, "layers": [], "T": T, "params": params} if need_cache else None

    for i in range(cfg.n_layers):
        p = f"enc{i}"
        Q = _split_heads(X @ params[f"{p}.Wq"].T + params[f"{p}.bq"], cfg.n_heads)
        K = _split_heads(X @ params[f"{p}.Wk"].T + params[f"{p}.bk"], cfg.n_heads)
        V = _split_heads(X @ params[f"{p}.Wv"].T + params[f"{p}.bv"], cfg.n_heads)
        A, ctx4 = _attended_context(Q, K, V, 1.0 / np.sqrt(cfg.head_dim), store=need_cache)
        ctx = _merge_heads(ctx4)  # [B, T, D]
        O = ctx @ params[f"{p}.Wo"].T + params[f"{p}.bo"]
        mask_attn = None
        if drop:
            mask_attn = _dropout_mask(rng, O.shape, cfg.dropout_p, dtype)
            O = O * mask_attn
        X1, ln1_cache = _layernorm_fwd(X + O, params[f"{p}.ln1.g"], params[f"{p}.ln1.b"])

        Z1 = X1 @ params[f"{p}.W1"].T + params[f"{p}.b1"]
        H1 = np.maximum(Z1, 0.0)
        F = H1 @ params[f"{p}.W2"].T + params[f"{p}.b2"]
        mask_ffn = None
        if drop:
            mask_ffn = _dropout_mask(rng, F.shape, cfg.dropout_p, dtype)
            F = F * mask_ffn
        X2, ln2_cache = _layernorm_fwd(X1 + F, params[f"{p}.ln2.g"], params[f"{p}.ln2.b"])

        if need_cache:
            cache["layers"].append({
                "X_in": X, "Q": Q, "K": K, "V": V, "A": A, "ctx": ctx,
                "mask_attn": mask_attn, "ln1": ln1_cache, "X1": X1,
                "H1": H1, "mask_ffn": mask_ffn, "ln2": ln2_cache,
            })
        X = X2

    h = X.mean(axis=1)  # [B, D]

    head_caches = {}
    outs = {}
    for head in HEAD_ORDER:
        W1, b1 = params[f"head.{head}.W1"], params[f"head.{head}.b1"]
        W2, b2 = params[f"head.{head}.W2"], params[f"head.{head}.b2"]
        z1 = h @ W1.T + b1
        a1 = np.maximum(z1, 0.0)
        z2 = a1 @ W2.T + b2
        if head == "valence":
            outs[head] = np.tanh(z2[:, 0])
        elif head == "arousal":
            outs[head] = 1.0 / (1.0 + np.exp(-z2[:, 0]))
        else:
            outs[head] = _softmax(z2)
        if need_cache:
            head_caches[head] = {"a1": a1, "out": outs[head]}

    if need_cache:
        cache["h"] = h
        cache["heads"] = head_caches

    out = ModelOutput(
        valence=outs["valence"], arousal=outs["arousal"],
        emotion_probs=outs["emotion"], size_probs=outs["size"],
        gender_probs=outs["gender"],
    )
    return out, cache


def backward(params: Mapping[str, np.ndarray], cfg: ModelConfig, cache: dict, out_grads: Mapping[str, np.ndarray]) -> dict:
    """Exact gradients of the upstream loss w.r.t. every parameter.

    `out_grads` supplies d loss / d valence and d loss / d arousal (the
    post-activation scalars) plus d loss / d logits for each classifier
    head. The cache must come from the forward pass over the same params.
    """
    if cache is None or cache.get("params") is not params:
        raise ConfigError("stale cache: backward needs the cache from a forward over these params")

    dtype = params["input.W"].dtype
    h = cache["h"]
    B, D = h.shape
    grads = {name: np.zeros_like(p) for name, p in params.items()}
    dh = np.zeros_like(h)

    for head in HEAD_ORDER:
        hc = cache["heads"][head]
        if head == "valence":
            dv = np.asarray(out_grads["d_valence"], dtype=dtype)
            dz2 = (dv * (1.0 - hc["out"] ** 2))[:, None]
        elif head == "arousal":
            da = np.asarray(out_grads["d_arousal"], dtype=dtype)
            dz2 = (da * hc["out"] * (1.0 - hc["out"]))[:, None]
        else:
            dz2 = np.asarray(out_grads[f"d_{head}_logits"], dtype=dtype)
        W1, W2 = params[f"head.{head}.W1"], params[f"head.{head}.W2"]
        a1 = hc["a1"]
        grads[f"head.{head}.W2"] += dz2.T @ a1
        grads[f"head.{head}.b2"] += dz2.sum(axis=0)
        da1 = dz2 @ W2
        dz1 = da1 * (a1 > 0)
        grads[f"head.{head}.W1"] += dz1.T @ h
        grads[f"head.{head}.b1"] += dz1.sum(axis=0)
        dh += dz1 @ W1

    T = cache["T"]
    dX = np.repeat(dh[:, None, :] / T, T, axis=1)  # undo mean pooling

    for i in reversed(range(cfg.n_layers)):
        p = f"enc{i}"
        lc = cache["layers"][i]

        d_res2, dg2, db2 = _layernorm_bwd(dX, lc["ln2"], params[f"{p}.ln2.g"])
        grads[f"{p}.ln2.g"] += dg2
        grads[f"{p}.ln2.b"] += db2
        dF = d_res2 if lc["mask_ffn"] is None else d_res2 * lc["mask_ffn"]

        H1 = lc["H1"]
        d_model, d_ff = params[f"{p}.W1"].shape[1], params[f"{p}.W1"].shape[0]
        dF2 = dF.reshape(-1, d_model)
        grads[f"{p}.W2"] += dF2.T @ H1.reshape(-1, d_ff)
        grads[f"{p}.b2"] += dF2.sum(axis=0)
        dH1 = dF @ params[f"{p}.W2"]
        dZ1 = dH1 * (H1 > 0)
        X1 = lc["X1"]
        dZ12 = dZ1.reshape(-1, d_ff)
        grads[f"{p}.W1"] += dZ12.T @ X1.reshape(-1, d_model)
        grads[f"{p}.b1"] += dZ12.sum(axis=0)
        dX1 = dZ1 @ params[f"{p}.W1"] + d_res2

        d_res1, dg1, db1 = _layernorm_bwd(dX1, lc["ln1"], params[f"{p}.ln1.g"])
        grads[f"{p}.ln1.g"] += dg1
        grads[f"{p}.ln1.b"] += db1
        dO = d_res1 if lc["mask_attn"] is None else d_res1 * lc["mask_attn"]

        ctx = lc["ctx"]
        dO2 = dO.reshape(-1, d_model)
        grads[f"{p}.Wo"] += dO2.T @ ctx.reshape(-1, d_model)
        grads[f"{p}.bo"] += dO2.sum(axis=0)
        dctx = _split_heads(dO @ params[f"{p}.Wo"], cfg.n_heads)

        A, Q, K, V = lc["A"], lc["Q"], lc["K"], lc["V"]
        dQ, dK, dV = _attention_input_grads(A, Q, K, V, dctx, 1.0 / np.sqrt(cfg.head_dim))

        X_in2 = lc["X_in"].reshape(-1, d_model)
        dX = d_res1
        for name, dproj in (("Wq", dQ), ("Wk", dK), ("Wv", dV)):
            dflat = _merge_heads(dproj)
            dflat2 = dflat.reshape(-1, d_model)
            grads[f"{p}.{name}"] += dflat2.T @ X_in2
            grads[f"{p}.b{name[1]}"] += dflat2.sum(axis=0)
            dX = dX + dflat @ params[f"{p}.{name}"]

    frames = cache["frames"]
    dX2 = dX.reshape(-1, dX.shape[-1])
    grads["input.W"] += dX2.T @ frames.reshape(-1, frames.shape[-1])
    grads["input.b"] += dX2.sum(axis=0)
    return grads


def predict(params: Mapping[str, np.ndarray], cfg: ModelConfig, specs: np.ndarray) -> ModelOutput:
    """Eval-mode forward without cache; deterministic for fixed params."""
    out, _ = forward(params, cfg, specs, train_mode=False, need_cache=False)
    return out


def predict_timed(params, cfg, spec) -> tuple[ModelOutput, float]:
    """Single-sample prediction plus wall-clock latency in milliseconds."""
    t0 = time.perf_counter()
    out = predict(params, cfg, spec)
    return out, (time.perf_counter() - t0) * 1000.0
