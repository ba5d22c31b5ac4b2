"""A tour of the reverse-mode core: tapes, tensors, and gradient checking.

Run from the repository root:  python3 demos/01_autodiff_basics.py
"""
import numpy as np

from eeg2bold import autodiff as ad
from eeg2bold.autodiff import Tape, Tensor
from eeg2bold.gradcheck import grad_check

# Every differentiable value is a Tensor; a Tape records the ops applied to
# it. backward() walks the tape in reverse and fills .grad on the leaves.
tape = Tape()
x = Tensor(np.array([0.5, -1.0, 2.0]), requires_grad=True)
weights = np.array([1.0, 2.0, -0.5])

s = ad.sine(x, omega0=2.0, tape=tape)       # sin(2x), elementwise
loss = ad.wsum(s, weights, tape)            # sum_i w_i sin(2 x_i)

tape.backward(loss)
print("loss      ", float(loss.data))
print("dloss/dx  ", x.grad)

# The same gradient by hand: d/dx_i [w_i sin(2 x_i)] = 2 w_i cos(2 x_i)
manual = 2.0 * weights * np.cos(2.0 * x.data)
print("manual    ", manual)
print("match     ", bool(np.allclose(x.grad, manual, atol=1e-12)))

# grad_check compares analytic gradients against central finite differences
# for any scalar-valued function of one tensor. This is the same harness the
# test suite points at every primitive and at the whole model.
def objective(t: Tensor, tape: Tape) -> Tensor:
    g = ad.gelu(t, tape)
    s = ad.sine(g, omega0=3.0, tape=tape)
    return ad.wsum(s, np.ones(t.data.size) / t.data.size, tape)

worst = grad_check(objective, Tensor(np.linspace(-1.0, 1.0, 7)))
print(f"grad_check max relative error: {worst:.3e}")
