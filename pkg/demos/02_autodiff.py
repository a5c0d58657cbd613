"""
A tape-based gradient in a few lines
=====================================

Record operations on a tape, run backward, and compare against finite
differences.
"""

import numpy as np

from mfaec.autodiff import AdamState, Tape, Tensor, adam_step, backward, grad_check, ops, zero_grad

x = Tensor([1.0, 2.0, 3.0], requires_grad=True)
with Tape():
    loss = ops.sum(ops.mul(x, x))
backward(loss)
print("d/dx sum(x^2) =", x.grad)

# a two-layer classifier on random data
rng = np.random.default_rng(0)
inputs = rng.standard_normal((32, 5))
labels = (inputs[:, 0] > 0).astype(int)
params = {
    "w1": Tensor(rng.standard_normal((5, 16)) * 0.3, requires_grad=True),
    "b1": Tensor(np.zeros(16), requires_grad=True),
    "w2": Tensor(rng.standard_normal((16, 2)) * 0.3, requires_grad=True),
    "b2": Tensor(np.zeros(2), requires_grad=True),
}


def objective():
    hidden = ops.gelu(ops.linear(inputs, params["w1"], params["b1"]))
    probs = ops.softmax(ops.linear(hidden, params["w2"], params["b2"]))
    picked = ops.index(probs, (np.arange(len(labels)), labels))
    return ops.scale(ops.sum(ops.log(picked)), -1.0 / len(labels))


report = grad_check(objective, params)
print("grad check passed:", report.passed, "worst relative error %.1e" % report.worst)

# a few Adam steps
state = AdamState(lr=0.05)
for step in range(50):
    zero_grad(params)
    with Tape():
        loss = objective()
    backward(loss)
    adam_step(params, state)
    if step % 10 == 0:
        print(step, round(loss.item(), 4))
