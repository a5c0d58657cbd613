"""Central finite-difference checking of tape gradients."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .core import Tape, Tensor, backward, zero_grad


@dataclass
class GradCheckReport:
    tol: float
    max_rel_error: dict[str, float] = field(default_factory=dict)
    # (name, flat index, analytic, numeric, relative error)
    failures: list[tuple] = field(default_factory=list)
    # entries sitting on a nondifferentiable point; excluded from `passed`
    kinks: list[tuple[str, int]] = field(default_factory=list)
    n_checked: int = 0

    @property
    def passed(self) -> bool:
        return not self.failures

    @property
    def worst(self) -> float:
        return max(self.max_rel_error.values(), default=0.0)


def analytic_gradients(f: Callable[[], Tensor], params: dict[str, Tensor]) -> dict[str, np.ndarray]:
    zero_grad(params)
    with Tape():
        loss = f()
    backward(loss)
    out = {}
    for name, p in params.items():
        out[name] = np.zeros_like(p.data) if p.grad is None else p.grad.copy()
    zero_grad(params)
    return out


def grad_check(
    f: Callable[[], Tensor],
    params: dict[str, Tensor],
    h: float = 1e-5,
    tol: float = 1e-4,
    floor: float = 1e-4,
    names=None,
) -> GradCheckReport:
    """Compare backprop gradients of scalar ``f()`` against central differences.

    Relative error per entry is ``|a - n| / max(|a|, |n|, floor)``. An entry
    that fails and whose one-sided slopes disagree by at least the error is
    treated as a kink (nondifferentiable point) and reported separately.
    """
    if h <= 0:
        raise ValueError("step h must be positive")
    analytic = analytic_gradients(f, params)
    f0 = float(f().data)
    if not np.isfinite(f0):
        raise FloatingPointError(f"grad_check: non-finite objective {f0}")

    report = GradCheckReport(tol=tol)
    for name in names or params:
        p = params[name]
        p.data = np.ascontiguousarray(p.data)
        flat = p.data.reshape(-1)
        a_flat = analytic[name].reshape(-1)
        worst = 0.0
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            fp = float(f().data)
            flat[i] = orig - h
            fm = float(f().data)
            flat[i] = orig
            if not (np.isfinite(fp) and np.isfinite(fm)):
                raise FloatingPointError(f"grad_check: non-finite objective at {name}[{i}]")
            num = (fp - fm) / (2 * h)
            a = a_flat[i]
            err = abs(a - num) / max(abs(a), abs(num), floor)
            report.n_checked += 1
            if err > tol:
                one_sided_gap = abs((fp - f0) / h - (f0 - fm) / h)
                if one_sided_gap >= abs(a - num):
                    report.kinks.append((name, i))
                    continue
                report.failures.append((name, i, a, num, err))
            worst = max(worst, err)
        report.max_rel_error[name] = worst
    return report
