"""Differentiable primitives.

Every public function here is a thin wrapper over :func:`apply_primitive`;
the registered kernels return ``(value, vjp)`` where ``vjp`` maps the output
cotangent to one cotangent per operand (``None`` for constant operands).
"""
from __future__ import annotations

import math

import numpy as np

from .core import ShapeError, Tensor, apply_primitive, primitive

MASK_VALUE = -1e30
LAYER_NORM_EPS = 1e-5
LOG_EPS = 1e-12


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


def _broadcast_shape(kind, a, b):
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(f"{kind}: cannot broadcast {a.shape} with {b.shape}") from None


@primitive("matmul")
def _matmul(a, b):
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul: incompatible extents {a.shape} x {b.shape}")
    if b.ndim == 2:
        a2 = a.reshape(-1, a.shape[-1])
        out = (a2 @ b).reshape(a.shape[:-1] + (b.shape[1],))

        def vjp(g):
            g2 = g.reshape(-1, g.shape[-1])
            return (g2 @ b.T).reshape(a.shape), a2.T @ g2
        return out, vjp
    try:
        out = a @ b
    except ValueError:
        raise ShapeError(f"matmul: incompatible batch extents {a.shape} x {b.shape}") from None

    def vjp(g):
        ga = _unbroadcast(g @ np.swapaxes(b, -1, -2), a.shape)
        gb = _unbroadcast(np.swapaxes(a, -1, -2) @ g, b.shape)
        return ga, gb
    return out, vjp


@primitive("add")
def _add(a, b):
    _broadcast_shape("add", a, b)
    return a + b, lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape))


@primitive("mul")
def _mul(a, b):
    _broadcast_shape("mul", a, b)
    return a * b, lambda g: (_unbroadcast(g * b, a.shape), _unbroadcast(g * a, b.shape))


@primitive("scale")
def _scale(x, factor):
    return x * factor, lambda g: (g * factor,)


@primitive("sum")
def _sum(x, axis=None):
    out = x.sum(axis=axis)

    def vjp(g):
        if axis is not None:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, x.shape).copy(),)
    return out, vjp


@primitive("concat")
def _concat(*xs, axis):
    ref = xs[0]
    ax = axis % ref.ndim
    for x in xs[1:]:
        if x.ndim != ref.ndim or any(
            x.shape[i] != ref.shape[i] for i in range(ref.ndim) if i != ax
        ):
            raise ShapeError(
                f"concat(axis={axis}): mismatched extents {ref.shape} and {x.shape}"
            )
    out = np.concatenate(xs, axis=ax)
    bounds = np.cumsum([x.shape[ax] for x in xs])[:-1]

    def vjp(g):
        return tuple(np.split(g, bounds, axis=ax))
    return out, vjp


@primitive("reshape")
def _reshape(x, shape):
    try:
        out = x.reshape(shape)
    except ValueError:
        raise ShapeError(f"reshape: cannot view {x.shape} as {shape}") from None
    return out, lambda g: (g.reshape(x.shape),)


@primitive("transpose")
def _transpose(x, axes):
    if sorted(axes) != list(range(x.ndim)):
        raise ShapeError(f"transpose: axes {axes} invalid for shape {x.shape}")
    inv = np.argsort(axes)
    return x.transpose(axes), lambda g: (g.transpose(inv),)


@primitive("index")
def _index(x, idx):
    try:
        out = x[idx]
    except IndexError as err:
        raise ShapeError(f"index: {err} for shape {x.shape}") from None

    def vjp(g):
        gx = np.zeros_like(x)
        np.add.at(gx, idx, g)
        return (gx,)
    return out, vjp


@primitive("embedding")
def _embedding(table, ids):
    ids = np.asarray(ids)
    if table.ndim != 2:
        raise ShapeError(f"embedding: table must be 2-d, got {table.shape}")
    if ids.size and (ids.min() < 0 or ids.max() >= table.shape[0]):
        raise ShapeError(
            f"embedding: id out of range [0, {table.shape[0]}) (max {ids.max()})"
        )
    out = table[ids]

    def vjp(g):
        gt = np.zeros_like(table)
        np.add.at(gt, ids, g)
        return (gt,)
    return out, vjp


@primitive("softmax")
def _softmax(x, axis=-1):
    z = x - x.max(axis=axis, keepdims=True)
    e = np.exp(z)
    y = e / e.sum(axis=axis, keepdims=True)

    def vjp(g):
        return (y * (g - (g * y).sum(axis=axis, keepdims=True)),)
    return y, vjp


@primitive("sigmoid")
def _sigmoid(x):
    y = 0.5 * (1.0 + np.tanh(0.5 * x))
    return y, lambda g: (g * y * (1.0 - y),)


_GELU_C = math.sqrt(2.0 / math.pi)


@primitive("gelu")
def _gelu(x):
    # tanh approximation
    x2 = x * x
    t = np.tanh(_GELU_C * x * (1.0 + 0.044715 * x2))
    y = 0.5 * x * (1.0 + t)

    def vjp(g):
        du = _GELU_C * (1.0 + 3 * 0.044715 * x2)
        return (g * (0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * du),)
    return y, vjp


@primitive("prelu")
def _prelu(x, slope):
    if slope.shape != (x.shape[-1],):
        raise ShapeError(f"prelu: slope {slope.shape} does not match channels {x.shape[-1]}")
    pos = x > 0
    y = np.where(pos, x, slope * x)

    def vjp(g):
        gx = np.where(pos, g, slope * g)
        gs = np.where(pos, 0.0, x * g).reshape(-1, x.shape[-1]).sum(axis=0)
        return gx, gs
    return y, vjp


@primitive("layer_norm")
def _layer_norm(x, eps=LAYER_NORM_EPS):
    mu = x.mean(axis=-1, keepdims=True)
    xc = x - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    y = xc * inv

    def vjp(g):
        gm = g.mean(axis=-1, keepdims=True)
        gym = (g * y).mean(axis=-1, keepdims=True)
        return (inv * (g - gm - y * gym),)
    return y, vjp


@primitive("linear")
def _linear(x, w, b):
    if w.ndim != 2 or x.shape[-1] != w.shape[0] or b.shape != (w.shape[1],):
        raise ShapeError(f"linear: input {x.shape}, weight {w.shape}, bias {b.shape}")
    x2 = x.reshape(-1, x.shape[-1])
    out = (x2 @ w + b).reshape(x.shape[:-1] + (w.shape[1],))

    def vjp(g):
        g2 = g.reshape(-1, g.shape[-1])
        return (g2 @ w.T).reshape(x.shape), x2.T @ g2, g2.sum(axis=0)
    return out, vjp


@primitive("conv1x1")
def _conv1x1(x, w, b):
    # kernel width 1 over time: a position-wise map with weight (out, in)
    if w.ndim != 2 or x.shape[-1] != w.shape[1] or b.shape != (w.shape[0],):
        raise ShapeError(f"conv1x1: input {x.shape}, weight {w.shape}, bias {b.shape}")
    x2 = x.reshape(-1, x.shape[-1])
    out = (x2 @ w.T + b).reshape(x.shape[:-1] + (w.shape[0],))

    def vjp(g):
        g2 = g.reshape(-1, g.shape[-1])
        return (g2 @ w).reshape(x.shape), g2.T @ x2, g2.sum(axis=0)
    return out, vjp


@primitive("time_avg_pool")
def _time_avg_pool(x, mask):
    """Masked mean over axis 1 of a (batch, time, feature) array."""
    mask = np.asarray(mask, dtype=np.float64)
    if x.ndim != 3 or mask.shape != x.shape[:2]:
        raise ShapeError(f"time_avg_pool: input {x.shape}, mask {mask.shape}")
    counts = mask.sum(axis=1, keepdims=True)
    if np.any(counts == 0):
        raise ShapeError("time_avg_pool: empty time axis")
    w = (mask / counts)[:, :, None]
    return (x * w).sum(axis=1), lambda g: (g[:, None, :] * w,)


@primitive("scaled_dot")
def _scaled_dot(q, k):
    if q.shape[-1] != k.shape[-1] or q.shape[:-2] != k.shape[:-2]:
        raise ShapeError(f"scaled_dot: query {q.shape}, key {k.shape}")
    s = 1.0 / math.sqrt(q.shape[-1])
    kt = np.swapaxes(k, -1, -2)
    out = (q @ kt) * s

    def vjp(g):
        return (g @ k) * s, np.swapaxes(g, -1, -2) @ q * s
    return out, vjp


@primitive("log")
def _log(x, eps=LOG_EPS):
    c = np.maximum(x, eps)
    return np.log(c), lambda g: (np.where(x > eps, g / c, 0.0),)


@primitive("dropout")
def _dropout(x, keep, rate):
    k = keep / (1.0 - rate)
    return x * k, lambda g: (g * k,)


# ---------------------------------------------------------------- wrappers

def matmul(a, b) -> Tensor:
    return apply_primitive("matmul", (a, b))


def add(a, b) -> Tensor:
    return apply_primitive("add", (a, b))


def mul(a, b) -> Tensor:
    return apply_primitive("mul", (a, b))


def scale(x, factor: float) -> Tensor:
    return apply_primitive("scale", (x,), factor=float(factor))


def sum(x, axis=None) -> Tensor:  # noqa: A001
    return apply_primitive("sum", (x,), axis=axis)


def concat(xs, axis: int) -> Tensor:
    return apply_primitive("concat", tuple(xs), axis=axis)


def reshape(x, shape) -> Tensor:
    return apply_primitive("reshape", (x,), shape=tuple(shape))


def transpose(x, axes) -> Tensor:
    return apply_primitive("transpose", (x,), axes=tuple(axes))


def index(x, idx) -> Tensor:
    """Fancy-index ``x[idx]``; repeated indices accumulate on the way back."""
    return apply_primitive("index", (x,), idx=idx)


def embedding(table, ids) -> Tensor:
    return apply_primitive("embedding", (table,), ids=np.asarray(ids, dtype=np.int64))


def softmax(x, axis: int = -1) -> Tensor:
    return apply_primitive("softmax", (x,), axis=axis)


def sigmoid(x) -> Tensor:
    return apply_primitive("sigmoid", (x,))


def gelu(x) -> Tensor:
    return apply_primitive("gelu", (x,))


def prelu(x, slope) -> Tensor:
    return apply_primitive("prelu", (x, slope))


def layer_norm(x, eps: float = LAYER_NORM_EPS) -> Tensor:
    return apply_primitive("layer_norm", (x,), eps=eps)


def linear(x, w, b) -> Tensor:
    return apply_primitive("linear", (x, w, b))


def conv1x1(x, w, b) -> Tensor:
    return apply_primitive("conv1x1", (x, w, b))


def time_avg_pool(x, mask) -> Tensor:
    return apply_primitive("time_avg_pool", (x,), mask=mask)


def scaled_dot(q, k) -> Tensor:
    return apply_primitive("scaled_dot", (q, k))


def log(x, eps: float = LOG_EPS) -> Tensor:
    return apply_primitive("log", (x,), eps=eps)


def dropout(x, rate: float, rng: np.random.Generator | None) -> Tensor:
    if rate <= 0.0 or rng is None:
        return x
    keep = (rng.random(x.shape) >= rate).astype(np.float64)
    return apply_primitive("dropout", (x,), keep=keep, rate=rate)
