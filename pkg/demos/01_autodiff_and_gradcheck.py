"""Tour of the autodiff core: build a graph, backpropagate, verify.

Everything downstream (experts, gate, training) is assembled from the
handful of primitives shown here.
"""

import numpy as np

from hetmoe import autodiff as ad

# A tiny two-layer computation: loss = mean(tanh(x @ w + b)^2)
rng = np.random.default_rng(0)
x = ad.constant(rng.normal(0, 1, (4, 3)))
w = ad.parameter(rng.normal(0, 0.5, (3, 2)))
b = ad.parameter(np.zeros(2))

h = ad.tanh(ad.add_bias(ad.matmul(x, w), b))
loss = ad.tmean(ad.mul(h, h))
print(f"loss = {loss.item():.6f}")

ad.backward(loss)
print("dL/dw:\n", w.grad.round(4))
print("dL/db:", b.grad.round(4))

# Gradients accumulate until zeroed; a second backward doubles them.
ad.backward(loss)
print("after second backward, dL/db doubled:", b.grad.round(4))
w.zero_grad()
b.zero_grad()

# The finite-difference checker replays the forward pass while nudging
# each parameter by +/- epsilon and compares against the analytic grads.
def objective():
    hh = ad.tanh(ad.add_bias(ad.matmul(x, w), b))
    return ad.tmean(ad.mul(hh, hh))

report = ad.finite_diff_check(objective, {"w": w, "b": b}, epsilon=1e-5, tol=1e-6)
print(f"\ngradient check: {report!r}")
for name, result in report.results.items():
    print(f"  {result!r}")

# The temperature softmax is the gate's core primitive: higher tau
# flattens the distribution but never changes the winner.
logits = ad.constant([2.0, 1.0, -0.5])
for tau in (0.5, 1.5, 3.0):
    p = ad.softmax_temperature(logits, tau).data
    print(f"tau={tau}: probs={p.round(4)} argmax={p.argmax()}")
