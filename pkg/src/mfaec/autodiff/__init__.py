from .core import (
    PRIMITIVES,
    ShapeError,
    Tape,
    TapeError,
    Tensor,
    UnknownPrimitiveError,
    active_tape,
    apply_primitive,
    backward,
    zero_grad,
)
from .gradcheck import GradCheckReport, analytic_gradients, grad_check
from .optim import AdamState, adam_step
from . import ops

__all__ = [
    "PRIMITIVES",
    "AdamState",
    "GradCheckReport",
    "ShapeError",
    "Tape",
    "TapeError",
    "Tensor",
    "UnknownPrimitiveError",
    "active_tape",
    "adam_step",
    "analytic_gradients",
    "apply_primitive",
    "backward",
    "grad_check",
    "ops",
    "zero_grad",
]
