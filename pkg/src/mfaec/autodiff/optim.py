from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import Tensor


@dataclass
class AdamState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)


def adam_step(
    params: dict[str, Tensor],
    state: AdamState,
    grads: dict[str, np.ndarray] | None = None,
) -> dict[str, Tensor]:
    """One bias-corrected Adam update, applied to ``params`` in place.

    ``grads`` defaults to each parameter's accumulated ``.grad``.
    """
    if grads is None:
        grads = {}
        for name, p in params.items():
            if p.grad is None:
                raise KeyError(f"adam_step: parameter {name!r} has no gradient")
            grads[name] = p.grad
    for name, p in params.items():
        if name not in grads:
            raise KeyError(f"adam_step: missing gradient for {name!r}")
        if grads[name].shape != p.shape:
            raise ValueError(
                f"adam_step: gradient shape {grads[name].shape} != parameter "
                f"shape {p.shape} for {name!r}"
            )
        if name in state.m and state.m[name].shape != p.shape:
            raise ValueError(f"adam_step: moment shape mismatch for {name!r}")

    state.t += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** state.t
    c2 = 1.0 - b2 ** state.t
    for name, p in params.items():
        g = grads[name]
        m = state.m.get(name)
        if m is None:
            m = state.m[name] = np.zeros_like(p.data)
            state.v[name] = np.zeros_like(p.data)
        v = state.v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        p.data -= state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
    return params
