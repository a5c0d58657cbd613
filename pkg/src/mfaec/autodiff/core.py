"""Tensor, tape and the reverse-mode backward pass."""
from __future__ import annotations

import itertools
import threading
from typing import Callable, NamedTuple

import numpy as np

_node_ids = itertools.count(1)
_local = threading.local()


class ShapeError(ValueError):
    """Operand extents are invalid for a primitive."""


class UnknownPrimitiveError(KeyError):
    pass


class TapeError(RuntimeError):
    pass


class Tensor:
    """Dense float64 array that may take part in differentiation.

    Leaf tensors with ``requires_grad`` accumulate into ``.grad`` whenever a
    backward pass reaches them; call :func:`zero_grad` before each step.
    """

    __slots__ = ("data", "requires_grad", "node_id", "grad", "_tape")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = bool(requires_grad)
        self.node_id = next(_node_ids)
        self.grad: np.ndarray | None = None
        self._tape: Tape | None = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data)

    def __repr__(self):
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}{flag})"

    def __add__(self, other):
        from .ops import add
        return add(self, other)

    def __mul__(self, other):
        from .ops import mul
        return mul(self, other)

    def __matmul__(self, other):
        from .ops import matmul
        return matmul(self, other)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


class Record(NamedTuple):
    kind: str
    inputs: tuple[Tensor, ...]
    out_id: int
    vjp: Callable[[np.ndarray], tuple]


class Tape:
    """Ordered record of primitive applications.

    Used as a context manager; operations on tensors that require gradients
    are only recorded while a tape is active on the current thread.
    """

    def __init__(self):
        self.records: list[Record] = []
        self.consumed = False

    def __enter__(self):
        stack = _tape_stack()
        stack.append(self)
        return self

    def __exit__(self, *exc):
        _tape_stack().pop()
        return False

    def __len__(self):
        return len(self.records)


def _tape_stack() -> list[Tape]:
    stack = getattr(_local, "stack", None)
    if stack is None:
        stack = _local.stack = []
    return stack


def active_tape() -> Tape | None:
    stack = _tape_stack()
    return stack[-1] if stack else None


# primitive registry: kind -> forward(*arrays, **attrs) -> (value, vjp)
PRIMITIVES: dict[str, Callable] = {}


def primitive(kind: str):
    def register(fn):
        PRIMITIVES[kind] = fn
        return fn
    return register


def apply_primitive(kind: str, operands, **attrs) -> Tensor:
    """Run primitive ``kind`` and record it on the active tape if needed."""
    try:
        fn = PRIMITIVES[kind]
    except KeyError:
        raise UnknownPrimitiveError(f"unknown primitive {kind!r}") from None
    operands = tuple(as_tensor(t) for t in operands)
    value, vjp = fn(*(t.data for t in operands), **attrs)
    tape = active_tape()
    needs = tape is not None and any(t.requires_grad for t in operands)
    out = Tensor(value, requires_grad=needs)
    if needs:
        out._tape = tape
        tape.records.append(Record(kind, operands, out.node_id, vjp))
    return out


def backward(loss: Tensor) -> dict[int, np.ndarray]:
    """Backpropagate from a scalar ``loss``.

    Returns a map ``node_id -> gradient`` over every recorded ancestor that
    requires grad. Leaf gradients are also accumulated into ``leaf.grad``.
    """
    if loss.data.size != 1:
        raise ValueError(f"backward needs a scalar loss, got shape {loss.shape}")
    tape = loss._tape
    if tape is None:
        raise TapeError("loss was not produced on an active tape")
    if tape.consumed:
        raise TapeError("tape already consumed by a previous backward pass")
    tape.consumed = True

    grads: dict[int, np.ndarray] = {loss.node_id: np.ones_like(loss.data)}
    produced = set()
    leaves: dict[int, Tensor] = {}
    for rec in reversed(tape.records):
        produced.add(rec.out_id)
        g = grads.get(rec.out_id)
        if g is None:
            continue
        parts = rec.vjp(g)
        for t, gi in zip(rec.inputs, parts):
            if not t.requires_grad or gi is None:
                continue
            nid = t.node_id
            if nid in grads:
                grads[nid] = grads[nid] + gi
            else:
                grads[nid] = gi
            if t._tape is None:
                leaves[nid] = t

    for nid, t in leaves.items():
        if nid in produced:
            continue
        g = grads[nid]
        if t.grad is None:
            t.grad = np.array(g, dtype=np.float64, copy=True)
        else:
            t.grad += g
    return grads


def zero_grad(params) -> None:
    values = params.values() if isinstance(params, dict) else params
    for p in values:
        p.grad = None
