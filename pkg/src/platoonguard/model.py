"""Transformer-encoder misbehavior classifier.

Input projection -> sinusoidal positional encoding -> stacked pre-norm
blocks (multi-head self-attention + position-wise feed-forward, both with
residuals) -> final layer norm -> one logit per timestep.  Forward and
backward are written against the primitives in nn.py; padded timesteps
are excluded from attention via key masking.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, asdict

import numpy as np

from . import nn
from .dataset import FeatureStats, Sample
from .sim import N_FEATURES


@dataclass(frozen=True)
class ModelConfig:
    d_model: int = 64
    n_heads: int = 4
    n_layers: int = 2
    d_ff: int = 128
    dropout: float = 0.1
    window: int = 10
    n_features: int = N_FEATURES

    def __post_init__(self):
        if self.d_model % self.n_heads != 0:
            raise ValueError("d_model must be divisible by n_heads")
        if min(self.d_model, self.n_heads, self.n_layers, self.d_ff, self.window) < 1:
            raise ValueError("all model dimensions must be >= 1")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout must lie in [0, 1)")


@dataclass
class EncoderModel:
    config: ModelConfig
    params: dict[str, np.ndarray]
    pe: np.ndarray  # [window, d_model], never trained
    stats: FeatureStats | None = None


def positional_encoding(window: int, d_model: int) -> np.ndarray:
    """Sin/cos positional encoding: PE[pos, 2i] = sin(pos / 10000^(2i/d))."""
    if d_model % 2 != 0:
        raise ValueError("d_model must be even for sin/cos positional encoding")
    pe = np.zeros((window, d_model))
    pos = np.arange(window)[:, None]
    div = np.power(10000.0, np.arange(0, d_model, 2) / d_model)
    pe[:, 0::2] = np.sin(pos / div)
    pe[:, 1::2] = np.cos(pos / div)
    return pe


def _param_shapes(cfg: ModelConfig) -> list[tuple[str, tuple[int, ...]]]:
    D, F = cfg.d_model, cfg.n_features
    shapes: list[tuple[str, tuple[int, ...]]] = [
        ("embed.w", (F, D)), ("embed.b", (D,)),
    ]
    for i in range(cfg.n_layers):
        p = f"enc{i}"
        shapes += [
            (f"{p}.ln1.g", (D,)), (f"{p}.ln1.b", (D,)),
            (f"{p}.attn.wq", (D, D)), (f"{p}.attn.bq", (D,)),
            (f"{p}.attn.wk", (D, D)),
            (f"{p}.attn.wv", (D, D)), (f"{p}.attn.bv", (D,)),
            (f"{p}.attn.wo", (D, D)), (f"{p}.attn.bo", (D,)),
            (f"{p}.ln2.g", (D,)), (f"{p}.ln2.b", (D,)),
            (f"{p}.ff.w1", (D, cfg.d_ff)), (f"{p}.ff.b1", (cfg.d_ff,)),
            (f"{p}.ff.w2", (cfg.d_ff, D)), (f"{p}.ff.b2", (D,)),
        ]
    shapes += [
        ("final_ln.g", (D,)), ("final_ln.b", (D,)),
        ("head.w", (D, 1)), ("head.b", (1,)),
    ]
    return shapes


def init_model(config: ModelConfig, seed: int = 0,
               stats: FeatureStats | None = None) -> EncoderModel:
    """Xavier-uniform weights, zero biases, unit layer-norm gains."""
    rng = np.random.default_rng(seed)
    params: dict[str, np.ndarray] = {}
    for name, shape in _param_shapes(config):
        if name.endswith(".g"):
            params[name] = np.ones(shape)
        elif len(shape) == 1:
            params[name] = np.zeros(shape)
        else:
            limit = math.sqrt(6.0 / (shape[0] + shape[1]))
            params[name] = rng.uniform(-limit, limit, size=shape)
    return EncoderModel(
        config=config,
        params=params,
        pe=positional_encoding(config.window, config.d_model),
        stats=stats,
    )


def parameter_count(config: ModelConfig) -> int:
    return sum(int(np.prod(shape)) for _, shape in _param_shapes(config))


# ---------------------------------------------------------------------------
# Multi-head self-attention
# ---------------------------------------------------------------------------


def _split_heads(x: np.ndarray, n_heads: int) -> np.ndarray:
    B, W, D = x.shape
    return x.reshape(B, W, n_heads, D // n_heads).transpose(0, 2, 1, 3)


def _merge_heads(x: np.ndarray) -> np.ndarray:
    B, H, W, dh = x.shape
    return x.transpose(0, 2, 1, 3).reshape(B, W, H * dh)


def multi_head_attention(x: np.ndarray, key_padding_mask: np.ndarray,
                         p: dict[str, np.ndarray], prefix: str, n_heads: int):
    """Scaled dot-product attention over the window; padded keys get zero
    weight.  Returns (output, cache); attention weights are in the cache.
    """
    if key_padding_mask.shape != x.shape[:2]:
        raise nn.ShapeError("multi_head_attention", x.shape, key_padding_mask.shape)
    if np.any(key_padding_mask.sum(axis=1) == 0):
        raise ValueError("multi_head_attention: window with every step padded")
    q, qc = nn.matmul_forward(x, p[f"{prefix}.wq"])
    # No key bias: a constant added to every key shifts each query's
    # score row uniformly, which softmax cancels, so the parameter would
    # be untrainable.
    k, kc = nn.matmul_forward(x, p[f"{prefix}.wk"])
    v, vc = nn.matmul_forward(x, p[f"{prefix}.wv"])
    q = q + p[f"{prefix}.bq"]
    v = v + p[f"{prefix}.bv"]
    qh, kh, vh = (_split_heads(a, n_heads) for a in (q, k, v))
    dh = x.shape[-1] // n_heads
    scale = 1.0 / math.sqrt(dh)
    scores = (qh @ np.swapaxes(kh, -1, -2)) * scale
    keymask = key_padding_mask[:, None, None, :].astype(bool)
    scores = np.where(keymask, scores, -np.inf)
    weights, wc = nn.softmax_forward(scores, axis=-1)
    ctx = weights @ vh
    merged = _merge_heads(ctx)
    out, oc = nn.matmul_forward(merged, p[f"{prefix}.wo"])
    out = out + p[f"{prefix}.bo"]
    cache = (qc, kc, vc, qh, kh, vh, wc, weights, scale, oc, n_heads)
    return out, cache


def multi_head_attention_backward(grad: np.ndarray, cache, prefix: str):
    qc, kc, vc, qh, kh, vh, wc, weights, scale, oc, n_heads = cache
    grads: dict[str, np.ndarray] = {}
    grads[f"{prefix}.bo"] = grad.reshape(-1, grad.shape[-1]).sum(axis=0)
    dmerged, grads[f"{prefix}.wo"] = nn.matmul_backward(grad, oc)
    dctx = _split_heads(dmerged, n_heads)
    dweights = dctx @ np.swapaxes(vh, -1, -2)
    dvh = np.swapaxes(weights, -1, -2) @ dctx
    dscores = nn.softmax_backward(dweights, wc)
    # Rows where every key is padded cannot occur (checked in forward);
    # masked positions have weight exactly 0, so dscores is 0 there.
    dqh = (dscores @ kh) * scale
    dkh = (np.swapaxes(dscores, -1, -2) @ qh) * scale
    dq, dk, dv = (_merge_heads(a) for a in (dqh, dkh, dvh))
    grads[f"{prefix}.bq"] = dq.reshape(-1, dq.shape[-1]).sum(axis=0)
    grads[f"{prefix}.bv"] = dv.reshape(-1, dv.shape[-1]).sum(axis=0)
    dx_q, grads[f"{prefix}.wq"] = nn.matmul_backward(dq, qc)
    dx_k, grads[f"{prefix}.wk"] = nn.matmul_backward(dk, kc)
    dx_v, grads[f"{prefix}.wv"] = nn.matmul_backward(dv, vc)
    return dx_q + dx_k + dx_v, grads


# ---------------------------------------------------------------------------
# Full encoder
# ---------------------------------------------------------------------------


def encoder_forward(model: EncoderModel, x: np.ndarray, m: np.ndarray,
                    train: bool = False, dropout_seed: int = 0, step: int = 0):
    """Logits [B, W] for a batch of windows plus the backward cache."""
    cfg = model.config
    p = model.params
    if x.ndim == 2:
        x = x[None]
        m = m[None]
    if x.shape[1:] != (cfg.window, cfg.n_features):
        raise nn.ShapeError("encoder_forward", x.shape, (cfg.window, cfg.n_features))
    rate = cfg.dropout if train else 0.0
    cache: dict = {"m": m, "layers": []}

    h, cache["embed"] = nn.matmul_forward(x, p["embed.w"])
    h = h + p["embed.b"] + model.pe

    for i in range(cfg.n_layers):
        lc: dict = {}
        pre = f"enc{i}"
        a, lc["ln1"] = nn.layer_norm_forward(h, p[f"{pre}.ln1.g"], p[f"{pre}.ln1.b"])
        attn, lc["attn"] = multi_head_attention(a, m, p, f"{pre}.attn", cfg.n_heads)
        rng = nn.dropout_rng(dropout_seed, 2 * i, step) if rate else None
        attn, lc["do1"] = nn.dropout_forward(attn, rate, train, rng)
        h = h + attn
        f, lc["ln2"] = nn.layer_norm_forward(h, p[f"{pre}.ln2.g"], p[f"{pre}.ln2.b"])
        ff1, lc["mm1"] = nn.matmul_forward(f, p[f"{pre}.ff.w1"])
        r, lc["relu"] = nn.relu_forward(ff1 + p[f"{pre}.ff.b1"])
        ff2, lc["mm2"] = nn.matmul_forward(r, p[f"{pre}.ff.w2"])
        ff2 = ff2 + p[f"{pre}.ff.b2"]
        rng = nn.dropout_rng(dropout_seed, 2 * i + 1, step) if rate else None
        ff2, lc["do2"] = nn.dropout_forward(ff2, rate, train, rng)
        h = h + ff2
        cache["layers"].append(lc)

    hf, cache["final_ln"] = nn.layer_norm_forward(h, p["final_ln.g"], p["final_ln.b"])
    z, cache["head"] = nn.matmul_forward(hf, p["head.w"])
    logits = (z + p["head.b"])[..., 0]
    return logits, cache


def encoder_backward(model: EncoderModel, cache, dlogits: np.ndarray):
    """Parameter gradients for a batch; mirrors encoder_forward exactly."""
    cfg = model.config
    grads: dict[str, np.ndarray] = {}
    dz = dlogits[..., None]
    grads["head.b"] = dz.reshape(-1, 1).sum(axis=0)
    dhf, grads["head.w"] = nn.matmul_backward(dz, cache["head"])
    dh, grads["final_ln.g"], grads["final_ln.b"] = nn.layer_norm_backward(
        dhf, cache["final_ln"])

    for i in reversed(range(cfg.n_layers)):
        lc = cache["layers"][i]
        pre = f"enc{i}"
        dff2 = nn.dropout_backward(dh, lc["do2"])
        grads[f"{pre}.ff.b2"] = dff2.reshape(-1, dff2.shape[-1]).sum(axis=0)
        dr, grads[f"{pre}.ff.w2"] = nn.matmul_backward(dff2, lc["mm2"])
        dff1 = nn.relu_backward(dr, lc["relu"])
        grads[f"{pre}.ff.b1"] = dff1.reshape(-1, dff1.shape[-1]).sum(axis=0)
        df, grads[f"{pre}.ff.w1"] = nn.matmul_backward(dff1, lc["mm1"])
        dh_ln, grads[f"{pre}.ln2.g"], grads[f"{pre}.ln2.b"] = nn.layer_norm_backward(
            df, lc["ln2"])
        dh = dh + dh_ln
        dattn = nn.dropout_backward(dh, lc["do1"])
        da, attn_grads = multi_head_attention_backward(dattn, lc["attn"], f"{pre}.attn")
        grads.update(attn_grads)
        dh_ln, grads[f"{pre}.ln1.g"], grads[f"{pre}.ln1.b"] = nn.layer_norm_backward(
            da, lc["ln1"])
        dh = dh + dh_ln

    grads["embed.b"] = dh.reshape(-1, dh.shape[-1]).sum(axis=0)
    _, grads["embed.w"] = nn.matmul_backward(dh, cache["embed"])
    return grads


def predict(model: EncoderModel, x: np.ndarray, m: np.ndarray,
            threshold: float = 0.5):
    """Per-step probabilities and decisions; padded steps carry no decision.

    A probability exactly at the threshold counts as an attack (>=).
    """
    logits, _ = encoder_forward(model, x, m, train=False)
    probs = nn.sigmoid(logits)
    decisions = (probs >= threshold).astype(np.uint8)
    decisions[np.asarray(m, dtype=bool) == False] = 0  # noqa: E712
    return probs, decisions


def batch_logits(model: EncoderModel, samples: list[Sample],
                 batch_size: int = 512) -> np.ndarray:
    """Inference logits for a list of windows, batched for throughput."""
    out = np.zeros((len(samples), model.config.window))
    for lo in range(0, len(samples), batch_size):
        chunk = samples[lo:lo + batch_size]
        x = np.stack([s.x for s in chunk])
        m = np.stack([s.m for s in chunk])
        keep = m.sum(axis=1) > 0
        if keep.any():
            logits, _ = encoder_forward(model, x[keep], m[keep], train=False)
            out[lo:lo + len(chunk)][keep] = logits
    return out


# ---------------------------------------------------------------------------
# Checkpoints
# ---------------------------------------------------------------------------

CHECKPOINT_VERSION = 1


def save_checkpoint(model: EncoderModel, path: str) -> None:
    doc = {
        "format_version": CHECKPOINT_VERSION,
        "model_config": asdict(model.config),
        "feature_stats": None,
        "parameters": {
            name: {"shape": list(arr.shape),
                   "values": [float(f"{v:.17g}") for v in arr.reshape(-1)]}
            for name, arr in model.params.items()
        },
    }
    if model.stats is not None:
        doc["feature_stats"] = {
            "mean": list(model.stats.mean),
            "variance": list(model.stats.variance),
            "count": model.stats.count,
            "epsilon": model.stats.epsilon,
        }
    tmp = path + ".tmp"
    with open(tmp, "w") as fh:
        json.dump(doc, fh)
        fh.write("\n")
    os.replace(tmp, path)


def load_checkpoint(path: str) -> EncoderModel:
    with open(path) as fh:
        doc = json.load(fh)
    if doc.get("format_version") != CHECKPOINT_VERSION:
        raise ValueError(f"unknown checkpoint format_version {doc.get('format_version')!r}")
    cfg = ModelConfig(**doc["model_config"])
    params = {}
    for name, entry in doc["parameters"].items():
        params[name] = np.asarray(entry["values"], dtype=np.float64).reshape(entry["shape"])
    expected = dict(_param_shapes(cfg))
    if set(params) != set(expected):
        raise ValueError("checkpoint parameter set does not match its model config")
    stats = None
    if doc.get("feature_stats"):
        fs = doc["feature_stats"]
        stats = FeatureStats(
            mean=np.asarray(fs["mean"]), variance=np.asarray(fs["variance"]),
            count=int(fs["count"]), epsilon=float(fs["epsilon"]),
        )
    return EncoderModel(config=cfg, params=params,
                        pe=positional_encoding(cfg.window, cfg.d_model), stats=stats)
