"""Temporal fusion heads and cross-modal attention fusion.

Shapes are (B, N, d) token sets: N sampled frames for video and flow, a
single token for audio. All heads are pre-norm residual layers; the
cross-attention head normalizes its query and key/value streams with
separate LayerNorm parameters and has no positional encoding.
"""

from __future__ import annotations

import numpy as np

from .numcore import autograd as ag
from .numcore.nn import (encoder_block, init_attention, init_encoder_block, init_layer_norm,
                         init_mlp, layer_norm, mlp_block, multi_head_attention)
from .numcore.params import ParamSet


def init_temporal_head(ps: ParamSet, prefix: str, d: int, layers: int, rng, mlp_ratio: int = 4):
    for i in range(layers):
        init_encoder_block(ps, f"{prefix}.blocks.{i}", d, mlp_ratio * d, rng)


def init_audio_head(ps: ParamSet, prefix: str, d: int, rng, mlp_ratio: int = 4):
    init_mlp(ps, prefix, d, mlp_ratio * d, rng)


def init_cross_head(ps: ParamSet, prefix: str, d: int, rng, mlp_ratio: int = 4):
    init_layer_norm(ps, f"{prefix}.ln_q", d)
    init_layer_norm(ps, f"{prefix}.ln_kv", d)
    init_attention(ps, f"{prefix}.attn", d, rng)
    init_layer_norm(ps, f"{prefix}.ln_mlp", d)
    init_mlp(ps, f"{prefix}.mlp", d, mlp_ratio * d, rng)


def zero_output_projections(ps: ParamSet, prefix: str):
    """Zero the attention and MLP output projections of every block under ``prefix``."""
    for name in ps.names(prefix):
        if name.endswith((".attn.wo", ".attn.bo", ".mlp.w2", ".mlp.b2")):
            ps[name].value = np.zeros_like(ps[name].value)


def temporal_fuse(features, p, heads: int, layers: int):
    """L pre-norm self-attention blocks over the frame axis; token count preserved."""
    features = ag.as_var(features)
    for i in range(layers):
        features = encoder_block(features, p.sub(f"blocks.{i}"), heads)
    return features


def audio_temporal_head(a, p):
    """a_t = MLP(a) for the single spectrogram token."""
    return mlp_block(a, p)


def cross_block(query, kv, p, heads: int):
    """query <- MCA(LN_q(query), LN_kv(kv)) + query; query <- MLP(LN(query)) + query."""
    query, kv = ag.as_var(query), ag.as_var(kv)
    if query.shape[-1] != kv.shape[-1]:
        raise ValueError(f"query dim {query.shape[-1]} != key/value dim {kv.shape[-1]}")
    q = layer_norm(query, p["ln_q.g"], p["ln_q.b"])
    k = layer_norm(kv, p["ln_kv.g"], p["ln_kv.b"])
    y = multi_head_attention(q, k, p.sub("attn"), heads) + query
    return mlp_block(layer_norm(y, p["ln_mlp.g"], p["ln_mlp.b"]), p.sub("mlp")) + y


def avg_pool(tokens):
    return ag.as_var(tokens).mean(axis=-2)


def fuse_video(v_t, x_t, p, heads: int):
    """Video tokens query the auxiliary tokens; returns the pooled v_m."""
    return avg_pool(cross_block(v_t, x_t, p, heads))


def fuse_auxiliary(x_t, v, p, heads: int):
    """Auxiliary tokens query the frozen backbone video features ``v``; returns x_m."""
    return avg_pool(cross_block(x_t, v, p, heads))
