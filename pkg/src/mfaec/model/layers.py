"""Transformer building blocks over (batch, time, feature) tensors."""
from __future__ import annotations

import numpy as np

from ..autodiff import Tensor
from ..autodiff import ops
from ..autodiff.ops import MASK_VALUE


def key_bias(mask: np.ndarray) -> np.ndarray:
    """Additive attention bias (B, 1, 1, Lk) from a boolean key mask (B, Lk)."""
    return np.where(mask, 0.0, MASK_VALUE)[:, None, None, :]


def causal_bias(length: int) -> np.ndarray:
    upper = np.triu(np.ones((length, length), dtype=bool), k=1)
    return np.where(upper, MASK_VALUE, 0.0)[None, None]


def norm(p, prefix: str, x: Tensor) -> Tensor:
    return ops.add(ops.mul(ops.layer_norm(x), p[prefix + ".g"]), p[prefix + ".b"])


def _split_heads(x: Tensor, h: int) -> Tensor:
    B, L, d = x.shape
    return ops.transpose(ops.reshape(x, (B, L, h, d // h)), (0, 2, 1, 3))


def attention(p, prefix: str, query: Tensor, context: Tensor, bias: np.ndarray, h: int):
    """Multi-head scaled dot-product attention of ``query`` over ``context``.

    Returns the projected output and the attention weights (B, h, Lq, Lk).
    """
    if query.shape[-1] != context.shape[-1]:
        raise ValueError(
            f"{prefix}: feature size mismatch {query.shape[-1]} vs {context.shape[-1]}"
        )
    B, Lq, d = query.shape
    q = _split_heads(ops.linear(query, p[prefix + ".wq"], p[prefix + ".bq"]), h)
    k = _split_heads(ops.linear(context, p[prefix + ".wk"], p[prefix + ".bk"]), h)
    v = _split_heads(ops.linear(context, p[prefix + ".wv"], p[prefix + ".bv"]), h)
    weights = ops.softmax(ops.add(ops.scaled_dot(q, k), bias), axis=-1)
    ctx = ops.matmul(weights, v)
    ctx = ops.reshape(ops.transpose(ctx, (0, 2, 1, 3)), (B, Lq, d))
    return ops.linear(ctx, p[prefix + ".wo"], p[prefix + ".bo"]), weights


def feed_forward(p, prefix: str, x: Tensor) -> Tensor:
    hidden = ops.gelu(ops.linear(x, p[prefix + ".w1"], p[prefix + ".b1"]))
    return ops.linear(hidden, p[prefix + ".w2"], p[prefix + ".b2"])


def transformer_layer(p, prefix, query, context, bias, h, rate=0.0, rng=None, trace=None):
    """Post-norm layer: attention + residual, then feed-forward + residual.

    Self-attention when ``context is query``; cross-attention otherwise.
    """
    att, w = attention(p, prefix + ".attn", query, context, bias, h)
    if trace is not None:
        trace.append(w)
    x = norm(p, prefix + ".ln1", ops.add(query, ops.dropout(att, rate, rng)))
    ff = feed_forward(p, prefix + ".ffn", x)
    return norm(p, prefix + ".ln2", ops.add(x, ops.dropout(ff, rate, rng)))


def decoder_layer(p, prefix, x, self_bias, memory, memory_bias, h, rate=0.0, rng=None, trace=None):
    att, w1 = attention(p, prefix + ".self_attn", x, x, self_bias, h)
    x = norm(p, prefix + ".ln1", ops.add(x, ops.dropout(att, rate, rng)))
    att, w2 = attention(p, prefix + ".cross_attn", x, memory, memory_bias, h)
    x = norm(p, prefix + ".ln2", ops.add(x, ops.dropout(att, rate, rng)))
    ff = feed_forward(p, prefix + ".ffn", x)
    if trace is not None:
        trace.extend((w1, w2))
    return norm(p, prefix + ".ln3", ops.add(x, ops.dropout(ff, rate, rng)))
