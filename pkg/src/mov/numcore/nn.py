"""Transformer building blocks over :class:`Var`.

Parameters are read from a :class:`ParamView`; the same functions run with
bound leaf Vars (training) or plain arrays (inference).
"""

from __future__ import annotations

import numpy as np

from . import autograd as ag
from .autograd import Var
from .params import ParamSet


class ConfigError(ValueError):
    pass


def layer_norm(x, gain, bias, epsilon: float = 1e-5) -> Var:
    return ag.layer_norm(x, gain, bias, epsilon)


def multi_head_attention(query_in, kv_in, p, heads: int, return_weights: bool = False):
    """Scaled dot-product attention over (..., n, d) inputs.

    Self-attention when ``query_in is kv_in``, cross-attention otherwise.
    ``p`` provides ``wq, bq, wk, bk, wv, bv, wo, bo``.
    """
    query_in, kv_in = ag.as_var(query_in), ag.as_var(kv_in)
    d = query_in.shape[-1]
    if d % heads:
        raise ConfigError(f"embed dim {d} not divisible by {heads} heads")
    if kv_in.shape[-1] != d:
        raise ValueError(f"query dim {d} != key/value dim {kv_in.shape[-1]}")
    dh = d // heads
    lead = query_in.shape[:-2]
    nq, nk = query_in.shape[-2], kv_in.shape[-2]

    def split(x, n):
        # (..., n, d) -> (..., heads, n, dh)
        x = x.reshape(x.shape[:-2] + (n, heads, dh))
        return ag.swapaxes(x, -2, -3)

    q = split(ag.linear(query_in, p["wq"], p["bq"]), nq)
    k = split(ag.linear(kv_in, p["wk"], p["bk"]), nk)
    v = split(ag.linear(kv_in, p["wv"], p["bv"]), nk)
    scores = ag.matmul(q, ag.swapaxes(k, -1, -2)) * (1.0 / np.sqrt(dh))
    weights = ag.softmax(scores, axis=-1)
    ctx = ag.swapaxes(ag.matmul(weights, v), -2, -3)
    ctx = ctx.reshape(lead + (nq, d))
    out = ag.linear(ctx, p["wo"], p["bo"])
    if return_weights:
        return out, weights.value
    return out


def mlp_block(x, p) -> Var:
    """Linear -> GELU -> Linear."""
    x = ag.as_var(x)
    w1 = p["w1"]
    if x.shape[-1] != np.shape(getattr(w1, "value", w1))[0]:
        raise ValueError(f"mlp input dim {x.shape[-1]} does not match w1 {np.shape(getattr(w1, 'value', w1))}")
    h = ag.gelu(ag.linear(x, w1, p["b1"]))
    return ag.linear(h, p["w2"], p["b2"])


def encoder_block(z, p, heads: int) -> Var:
    """Pre-norm residual block: y = MSA(LN(z)) + z; z' = MLP(LN(y)) + y."""
    h = layer_norm(z, p["ln1.g"], p["ln1.b"])
    y = multi_head_attention(h, h, p.sub("attn"), heads) + z
    return mlp_block(layer_norm(y, p["ln2.g"], p["ln2.b"]), p.sub("mlp")) + y


# initialisation

def init_layer_norm(ps: ParamSet, prefix: str, d: int):
    ps.add(f"{prefix}.g", np.ones(d))
    ps.add(f"{prefix}.b", np.zeros(d))


def _xavier(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


def init_linear(ps: ParamSet, prefix: str, fan_in: int, fan_out: int,
                rng: np.random.Generator, wname: str = "w", bname: str = "b"):
    ps.add(f"{prefix}.{wname}", _xavier(rng, fan_in, fan_out))
    ps.add(f"{prefix}.{bname}", np.zeros(fan_out))


def init_attention(ps: ParamSet, prefix: str, d: int, rng: np.random.Generator):
    for name in ("q", "k", "v", "o"):
        init_linear(ps, prefix, d, d, rng, wname=f"w{name}", bname=f"b{name}")


def init_mlp(ps: ParamSet, prefix: str, d: int, hidden: int, rng: np.random.Generator,
             d_out: int | None = None):
    init_linear(ps, prefix, d, hidden, rng, wname="w1", bname="b1")
    init_linear(ps, prefix, hidden, d_out or d, rng, wname="w2", bname="b2")


def init_encoder_block(ps: ParamSet, prefix: str, d: int, hidden: int, rng: np.random.Generator):
    init_layer_norm(ps, f"{prefix}.ln1", d)
    init_attention(ps, f"{prefix}.attn", d, rng)
    init_layer_norm(ps, f"{prefix}.ln2", d)
    init_mlp(ps, f"{prefix}.mlp", d, hidden, rng)
